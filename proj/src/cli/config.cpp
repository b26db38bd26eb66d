#include "lu/cli/config.h"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace lu::cli {

namespace {

using nlohmann::json;

// Line of every JSON pointer in the document. Object members map to the line
// of their key, array elements to the line where the element starts.
class LineIndex {
 public:
  explicit LineIndex(std::string_view text) { scan(text); }

  std::size_t line_of(std::string path) const {
    while (true) {
      auto it = lines_.find(path);
      if (it != lines_.end()) return it->second;
      const auto slash = path.rfind('/');
      if (slash == std::string::npos || path.empty()) return 1;
      path.resize(slash);
    }
  }

 private:
  struct Frame {
    bool object;
    std::string path;
    std::string key;
    std::size_t index = 0;
    bool want_key = true;
  };

  void record(const std::vector<Frame>& stack, std::size_t line) {
    if (stack.empty()) {
      lines_.emplace("", line);
      return;
    }
    const Frame& f = stack.back();
    if (!f.object) lines_.emplace(f.path + "/" + std::to_string(f.index), line);
  }

  static std::string child_path(const std::vector<Frame>& stack) {
    if (stack.empty()) return "";
    const Frame& f = stack.back();
    return f.path + "/" + (f.object ? f.key : std::to_string(f.index));
  }

  void scan(std::string_view s) {
    std::vector<Frame> stack;
    std::size_t line = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const char c = s[i];
      if (c == '\n') {
        ++line;
      } else if (c == '{' || c == '[') {
        record(stack, line);
        const std::string path = child_path(stack);
        stack.push_back({c == '{', path, "", 0, true});
      } else if (c == '}' || c == ']') {
        if (!stack.empty()) stack.pop_back();
      } else if (c == ',') {
        if (!stack.empty()) {
          if (stack.back().object) {
            stack.back().want_key = true;
          } else {
            ++stack.back().index;
          }
        }
      } else if (c == ':') {
        if (!stack.empty()) stack.back().want_key = false;
      } else if (c == '"') {
        std::string str;
        for (++i; i < s.size() && s[i] != '"'; ++i) {
          if (s[i] == '\\' && i + 1 < s.size()) ++i;
          str += s[i];
        }
        if (!stack.empty() && stack.back().object && stack.back().want_key) {
          stack.back().key = str;
          lines_.emplace(stack.back().path + "/" + str, line);
        } else {
          record(stack, line);
        }
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        record(stack, line);
        while (i + 1 < s.size() && std::string_view(",]}\n \t\r").find(s[i + 1]) == std::string_view::npos) ++i;
      }
    }
  }

  std::map<std::string, std::size_t> lines_;
};

class Reader {
 public:
  Reader(const LineIndex& index, std::string_view source) : index_(index), source_(source) {}

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    throw ConfigError(source_ + ":" + std::to_string(index_.line_of(path)) + ": " +
                      (path.empty() ? std::string("/") : path) + ": " + what);
  }

  void object(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) const {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || a == key;
      if (!ok) fail(path + "/" + key, "unknown key '" + key + "'");
    }
  }

  std::size_t uint(const json& j, const std::string& path, std::size_t min = 0) const {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
      fail(path, "expected a non-negative integer");
    }
    const auto v = j.get<std::uint64_t>();
    if (v < min) fail(path, "must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }

  double number(const json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
  }

  std::string string(const json& j, const std::string& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }

  bool boolean(const json& j, const std::string& path) const {
    if (!j.is_boolean()) fail(path, "expected true or false");
    return j.get<bool>();
  }

  const json& array(const json& j, const std::string& path, bool non_empty = false) const {
    if (!j.is_array()) fail(path, "expected an array");
    if (non_empty && j.empty()) fail(path, "must not be empty");
    return j;
  }

  // Runs `fn` and turns a ValidationError into a located ConfigError.
  template <typename Fn>
  auto checked(const std::string& path, Fn fn) const {
    try {
      return fn();
    } catch (const ValidationError& e) {
      fail(path, e.what());
    }
  }

 private:
  const LineIndex& index_;
  std::string source_;
};

// `masked` is non-null only for the bigram relearn stage.
void read_stage(const Reader& r, const json& j, const std::string& path, core::UnlearnConfig& out,
                bool* masked = nullptr) {
  if (masked) {
    r.object(j, path, {"steps", "learning_rate", "batch_size", "loss_weights", "masked"});
  } else {
    r.object(j, path, {"steps", "learning_rate", "batch_size", "loss_weights"});
  }
  if (j.contains("steps")) out.steps = r.uint(j["steps"], path + "/steps", 1);
  if (j.contains("learning_rate")) {
    out.learning_rate = r.number(j["learning_rate"], path + "/learning_rate");
    if (!(out.learning_rate > 0.0)) r.fail(path + "/learning_rate", "must be positive");
  }
  if (j.contains("batch_size")) {
    const auto& b = j["batch_size"];
    if (b.is_string()) {
      if (b.get<std::string>() != "full") r.fail(path + "/batch_size", "expected a positive integer or \"full\"");
      out.batch_size = eval::kFullBatch;
    } else {
      out.batch_size = r.uint(b, path + "/batch_size", 1);
    }
  }
  if (j.contains("loss_weights")) {
    const std::string wpath = path + "/loss_weights";
    r.object(j["loss_weights"], wpath, {"forget", "retain"});
    for (const auto& [k, v] : j["loss_weights"].items()) {
      out.loss_weights[k] = r.number(v, wpath + "/" + k);
      if (out.loss_weights[k] < 0.0) r.fail(wpath + "/" + k, "must be >= 0");
    }
  }
  if (masked && j.contains("masked")) *masked = r.boolean(j["masked"], path + "/masked");
}

template <typename T, typename Parse>
std::vector<std::vector<T>> read_folds(const Reader& r, const json& j, const std::string& path, Parse parse) {
  std::vector<std::vector<T>> folds;
  r.array(j, path, true);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string fp = path + "/" + std::to_string(i);
    r.array(j[i], fp, true);
    std::vector<T> fold;
    for (std::size_t k = 0; k < j[i].size(); ++k) {
      const std::string ep = fp + "/" + std::to_string(k);
      const std::string name = r.string(j[i][k], ep);
      fold.push_back(r.checked(ep, [&] { return parse(name); }));
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

double read_floor(const Reader& r, const json& j, const std::string& path) {
  const double f = r.number(j, path);
  if (!(f >= 0.0 && f <= 1.0)) r.fail(path, "must lie in [0, 1]");
  return f;
}

eval::GmmProtocolConfig read_gmm(const Reader& r, const json& j, const std::string& path) {
  r.object(j, path,
           {"n_gaussians", "variance", "perturbation", "assignment", "n_clusters", "n_per_gaussian", "n_background",
            "n_eval", "grid", "train", "unlearn", "relearn", "folds", "recovery_floor"});
  eval::GmmProtocolConfig c;
  const auto p = [&](const char* k) { return path + "/" + k; };
  if (j.contains("n_gaussians")) c.n_gaussians = r.uint(j["n_gaussians"], p("n_gaussians"), 3);
  if (j.contains("variance")) c.variance = r.number(j["variance"], p("variance"));
  if (j.contains("perturbation")) c.perturbation = r.number(j["perturbation"], p("perturbation"));
  if (j.contains("assignment")) {
    const std::string a = r.string(j["assignment"], p("assignment"));
    if (a == "random") {
      c.assignment = eval::AssignmentScheme::random;
    } else if (a == "kmeans") {
      c.assignment = eval::AssignmentScheme::kmeans;
    } else if (a == "concentric") {
      c.assignment = eval::AssignmentScheme::concentric;
    } else {
      r.fail(p("assignment"), "expected \"random\", \"kmeans\" or \"concentric\"");
    }
  }
  if (j.contains("n_clusters")) c.n_clusters = r.uint(j["n_clusters"], p("n_clusters"), 3);
  if (j.contains("n_per_gaussian")) c.n_per_gaussian = r.uint(j["n_per_gaussian"], p("n_per_gaussian"), 1);
  if (j.contains("n_background")) c.n_background = r.uint(j["n_background"], p("n_background"), 1);
  if (j.contains("n_eval")) c.n_eval = r.uint(j["n_eval"], p("n_eval"), 100);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    r.object(g, p("grid"), {"per_axis", "first", "spacing", "bandwidth"});
    if (g.contains("per_axis")) c.grid.per_axis = r.uint(g["per_axis"], p("grid") + "/per_axis", 1);
    if (g.contains("first")) c.grid.first = r.number(g["first"], p("grid") + "/first");
    if (g.contains("spacing")) c.grid.spacing = r.number(g["spacing"], p("grid") + "/spacing");
    if (g.contains("bandwidth")) c.grid.bandwidth = r.number(g["bandwidth"], p("grid") + "/bandwidth");
  }
  if (j.contains("train")) read_stage(r, j["train"], p("train"), c.train);
  if (j.contains("unlearn")) read_stage(r, j["unlearn"], p("unlearn"), c.unlearn);
  if (j.contains("relearn")) read_stage(r, j["relearn"], p("relearn"), c.relearn);
  if (j.contains("folds")) c.folds = read_folds<gmm::Task>(r, j["folds"], p("folds"), gmm::parse_task);
  if (j.contains("recovery_floor")) c.recovery_floor = read_floor(r, j["recovery_floor"], p("recovery_floor"));
  return c;
}

eval::BigramProtocolConfig read_bigram(const Reader& r, const json& j, const std::string& path) {
  r.object(j, path, {"epsilon", "init_std", "train", "unlearn", "relearn", "n_eval", "folds", "recovery_floor"});
  eval::BigramProtocolConfig c;
  const auto p = [&](const char* k) { return path + "/" + k; };
  if (j.contains("epsilon")) {
    c.train.epsilon = r.number(j["epsilon"], p("epsilon"));
    c.relearn.epsilon = c.train.epsilon;
  }
  if (j.contains("init_std")) c.train.init_std = r.number(j["init_std"], p("init_std"));
  if (j.contains("train")) read_stage(r, j["train"], p("train"), c.train.stage);
  if (j.contains("unlearn")) read_stage(r, j["unlearn"], p("unlearn"), c.unlearn);
  if (j.contains("relearn")) read_stage(r, j["relearn"], p("relearn"), c.relearn.stage, &c.relearn.masked);
  if (j.contains("n_eval")) c.n_eval = r.uint(j["n_eval"], p("n_eval"), 1000);
  if (j.contains("folds")) c.folds = read_folds<bigram::Token>(r, j["folds"], p("folds"), bigram::parse_token);
  if (j.contains("recovery_floor")) c.recovery_floor = read_floor(r, j["recovery_floor"], p("recovery_floor"));
  return c;
}

template <typename T, typename Name>
std::vector<eval::RelearnTarget> default_targets(const std::vector<std::vector<T>>& folds, Name name) {
  std::vector<eval::RelearnTarget> out;
  if (folds.size() < 2) return out;
  for (const auto& fold : folds) {
    eval::RelearnTarget t;
    for (const T& x : fold) t.emplace_back(name(x));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // Recover the line from the byte offset of the failure.
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()) && i + 1 < e.byte; ++i) {
      line += text[i] == '\n' ? 1 : 0;
    }
    throw ConfigError(std::string(source) + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  const LineIndex index(text);
  const Reader r(index, source);

  r.object(doc, "",
           {"name", "task", "seeds", "methods", "relearn_targets", "output_dir", "workers", "gmm", "bigram",
            "artifacts", "ablation"});
  ExperimentConfig c;
  if (doc.contains("name")) c.name = r.string(doc["name"], "/name");
  if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos) {
    r.fail("/name", "must be a non-empty name without path separators");
  }
  if (!doc.contains("task")) r.fail("", "missing required key 'task'");
  const std::string task_text = r.string(doc["task"], "/task");
  const eval::TaskKind task = r.checked("/task", [&] { return eval::parse_task_kind(task_text); });

  if (!doc.contains("seeds")) r.fail("", "missing required key 'seeds'");
  r.array(doc["seeds"], "/seeds", true);
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < doc["seeds"].size(); ++i) {
    const std::string path = "/seeds/" + std::to_string(i);
    const std::uint64_t s = r.uint(doc["seeds"][i], path);
    if (!seen.insert(s).second) r.fail(path, "duplicate seed " + std::to_string(s));
    c.seeds.push_back(s);
  }

  if (doc.contains("methods")) {
    r.array(doc["methods"], "/methods", true);
    c.methods.clear();
    for (std::size_t i = 0; i < doc["methods"].size(); ++i) {
      const std::string path = "/methods/" + std::to_string(i);
      const std::string m = r.string(doc["methods"][i], path);
      const eval::Method method = r.checked(path, [&] { return eval::parse_method(m); });
      for (auto prev : c.methods) {
        if (prev == method) r.fail(path, "duplicate method " + m);
      }
      c.methods.push_back(method);
    }
  }
  if (doc.contains("output_dir")) c.output_dir = r.string(doc["output_dir"], "/output_dir");
  if (doc.contains("workers")) c.workers = r.uint(doc["workers"], "/workers", 1);
  if (doc.contains("artifacts")) {
    r.object(doc["artifacts"], "/artifacts", {"slice_points"});
    if (doc["artifacts"].contains("slice_points")) {
      c.slice_points = r.uint(doc["artifacts"]["slice_points"], "/artifacts/slice_points", 2);
    }
  }
  if (doc.contains("ablation")) {
    r.object(doc["ablation"], "/ablation", {"ideal"});
    if (doc["ablation"].contains("ideal")) c.ideal = r.number(doc["ablation"]["ideal"], "/ablation/ideal");
  }

  const char* own = task == eval::TaskKind::gmm ? "gmm" : "bigram";
  const char* other = task == eval::TaskKind::gmm ? "bigram" : "gmm";
  if (doc.contains(other)) r.fail(std::string("/") + other, std::string("section not used by task ") + own);
  const json section = doc.contains(own) ? doc[own] : json::object();
  const std::string spath = std::string("/") + own;
  if (task == eval::TaskKind::gmm) {
    auto g = read_gmm(r, section, spath);
    c.relearn_targets = default_targets(g.folds, gmm::task_name);
    c.protocol = std::move(g);
  } else {
    auto b = read_bigram(r, section, spath);
    c.relearn_targets = default_targets(b.folds, bigram::token_name);
    c.protocol = std::move(b);
  }
  r.checked(spath, [&] {
    eval::validate(c.protocol);
    return 0;
  });

  if (doc.contains("relearn_targets")) {
    const auto& t = r.array(doc["relearn_targets"], "/relearn_targets");
    c.relearn_targets.clear();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::string path = "/relearn_targets/" + std::to_string(i);
      r.array(t[i], path, true);
      eval::RelearnTarget target;
      for (std::size_t k = 0; k < t[i].size(); ++k) target.push_back(r.string(t[i][k], path + "/" + std::to_string(k)));
      // Resolve against the folds now so a bad target is reported with its line.
      r.checked(path, [&] { return eval::resolve_targets(c.protocol, {target}); });
      c.relearn_targets.push_back(std::move(target));
    }
  }

  c.canonical = doc.dump();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot read config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(config.canonical));
  return buf;
}

}  // namespace lu::cli
