#include "lcwire/config.hpp"

#include "lcwire/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <variant>

namespace lcwire {

namespace {

using FieldRef = std::variant<double*, int*, std::uint64_t*, std::vector<double>*, std::vector<int>*,
                              std::array<double, kNumPairClasses>*, std::vector<RoofFamily>*>;

struct Field {
  const char* key;
  FieldRef ref;
};

std::vector<Field> fields(RunConfig& c) {
  TrainConfig& t = c.train;
  SampleConfig& s = t.sample;
  LptConfig& m = t.architecture;
  ReconstructConfig& r = c.infer;
  SceneSpec& sc = c.scene;
  return {
      {"seed", &c.seed},
      {"jobs", &c.jobs},
      {"patch.epsilon", &c.patch.epsilon},
      {"patch.max_lines", &c.patch.max_lines},
      {"patch.max_pair_lines", &c.patch.max_pair_lines},
      {"patch.num_queries", &c.patch.num_queries},
      {"patch.density_fraction", &c.patch.density_fraction},
      {"patch.density_radius", &c.patch.density_radius},
      {"scene.families", &sc.families},
      {"scene.width_min", &sc.width_min},
      {"scene.width_max", &sc.width_max},
      {"scene.depth_min", &sc.depth_min},
      {"scene.depth_max", &sc.depth_max},
      {"scene.wall_min", &sc.wall_min},
      {"scene.wall_max", &sc.wall_max},
      {"scene.roof_min", &sc.roof_min},
      {"scene.roof_max", &sc.roof_max},
      {"scene.noise_rel", &sc.noise_rel},
      {"scene.clutter_ratio", &sc.clutter_ratio},
      {"scene.fragments_min", &sc.fragments_min},
      {"scene.fragments_max", &sc.fragments_max},
      {"scene.duplicate_ratio", &sc.duplicate_ratio},
      {"scene.num_cameras", &sc.num_cameras},
      {"scene.clutter_margin_rel", &sc.clutter_margin_rel},
      {"label.tau_2d", &c.label.tau_2d},
      {"label.tau_3d", &c.label.tau_3d},
      {"sample.junction_fraction", &s.junction_fraction},
      {"sample.eps_fp", &s.eps_fp},
      {"sample.pair_mix", &s.pair_mix},
      {"sample.pair_jitter", &s.pair_jitter},
      {"sample.fp_margin", &s.fp_margin},
      {"sample.regress_radius", &s.regress_radius},
      {"model.fc_widths", &m.fc_widths},
      {"model.heads", &m.heads},
      {"model.ff_width", &m.ff_width},
      {"model.head_widths", &m.head_widths},
      {"model.bn_momentum", &m.bn_momentum},
      {"model.bn_eps", &m.bn_eps},
      {"model.ln_eps", &m.ln_eps},
      {"optim.lr", &t.optimizer.lr},
      {"optim.beta1", &t.optimizer.beta1},
      {"optim.beta2", &t.optimizer.beta2},
      {"optim.eps", &t.optimizer.eps},
      {"optim.clip_norm", &t.optimizer.clip_norm},
      {"loss.lambda_v", &t.loss.lambda_v},
      {"loss.lambda_e", &t.loss.lambda_e},
      {"train.queries_per_step", &t.queries_per_step},
      {"train.pairs_per_step", &t.pairs_per_step},
      {"train.epochs", &t.epochs},
      {"train.steps_per_scene", &t.steps_per_scene},
      {"train.checkpoint_every", &c.checkpoint_every},
      {"infer.tau_conf", &r.tau_conf},
      {"infer.refine_steps", &r.refine_steps},
      {"infer.top_m", &r.top_m},
      {"infer.pair_budget", &r.pair_budget},
      {"infer.tau_edge", &r.tau_edge},
      {"infer.tau_nms", &r.tau_nms},
      {"infer.h_max", &r.h_max},
      {"infer.heuristic_angle", &r.heuristic_angle},
      {"infer.heuristic_min_cluster", &r.heuristic_min_cluster},
      {"infer.heuristic_coverage", &r.heuristic_coverage},
      {"eval.vertex_eta", &c.eval.vertex_eta},
      {"eval.structural_eta", &c.eval.structural_eta},
      {"eval.tau_match", &c.eval.tau_match},
  };
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (out.empty() || std::any_of(out.begin(), out.end(), [](const std::string& x) { return x.empty(); }))
    throw Error("expected a comma-separated list");
  return out;
}

template <typename T>
T parse_number(const std::string& text) {
  const std::string s = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) throw Error("not a number: '" + s + "'");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) throw Error("not a finite number: '" + s + "'");
  return v;
}

struct Assign {
  const std::string& value;
  void operator()(double* p) const { *p = parse_number<double>(value); }
  void operator()(int* p) const { *p = parse_number<int>(value); }
  void operator()(std::uint64_t* p) const { *p = parse_number<std::uint64_t>(value); }
  void operator()(std::vector<double>* p) const {
    std::vector<double> out;
    for (const auto& s : split_list(value)) out.push_back(parse_number<double>(s));
    *p = out;
  }
  void operator()(std::vector<int>* p) const {
    std::vector<int> out;
    for (const auto& s : split_list(value)) out.push_back(parse_number<int>(s));
    *p = out;
  }
  void operator()(std::array<double, kNumPairClasses>* p) const {
    const auto items = split_list(value);
    if (items.size() != kNumPairClasses) throw Error("expected 5 values");
    for (int i = 0; i < kNumPairClasses; ++i) (*p)[i] = parse_number<double>(items[i]);
  }
  void operator()(std::vector<RoofFamily>* p) const {
    std::vector<RoofFamily> out;
    for (const auto& s : split_list(value)) out.push_back(roof_family_from_string(s));
    *p = out;
  }
};

template <typename Range, typename F>
std::string join(const Range& r, F&& f) {
  std::string out;
  for (const auto& x : r) {
    if (!out.empty()) out += ",";
    out += f(x);
  }
  return out;
}

struct Format {
  std::string operator()(const double* p) const { return format_real(*p); }
  std::string operator()(const int* p) const { return std::to_string(*p); }
  std::string operator()(const std::uint64_t* p) const { return std::to_string(*p); }
  std::string operator()(const std::vector<double>* p) const { return join(*p, format_real); }
  std::string operator()(const std::vector<int>* p) const {
    return join(*p, [](int v) { return std::to_string(v); });
  }
  std::string operator()(const std::array<double, kNumPairClasses>* p) const { return join(*p, format_real); }
  std::string operator()(const std::vector<RoofFamily>* p) const {
    return join(*p, [](RoofFamily f) { return std::string(to_string(f)); });
  }
};

FieldRef find_field(std::vector<Field>& fs, const std::string& key) {
  for (auto& f : fs)
    if (key == f.key) return f.ref;
  throw ConfigError("unknown config key '" + key + "'");
}

void check_etas(const char* key, const std::vector<double>& etas) {
  if (etas.empty()) throw ConfigError(std::string(key) + ": at least one threshold is required");
  for (double e : etas)
    if (!(e > 0)) throw ConfigError(std::string(key) + ": thresholds must be positive");
}

}  // namespace

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.sample.patch = patch;
  t.seed = seed;
  return t;
}

ReconstructConfig RunConfig::reconstruct_config() const {
  ReconstructConfig r = infer;
  r.patch = patch;
  r.seed = seed;
  return r;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto fs = fields(*this);
  const FieldRef ref = find_field(fs, key);
  try {
    std::visit(Assign{value}, ref);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string RunConfig::get(const std::string& key) const {
  auto fs = fields(const_cast<RunConfig&>(*this));
  return std::visit(Format{}, find_field(fs, key));
}

std::vector<std::string> RunConfig::keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const auto& f : fields(c)) out.emplace_back(f.key);
  return out;
}

void RunConfig::validate() const {
  auto wrap = [](const char* section, const auto& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  if (jobs < 1) throw ConfigError("jobs: must be at least 1");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every: must be non-negative");
  if (!(label.tau_2d > 0)) throw ConfigError("label.tau_2d: must be positive");
  if (!(label.tau_3d > 0)) throw ConfigError("label.tau_3d: must be positive");
  if (!(eval.tau_match > 0)) throw ConfigError("eval.tau_match: must be positive");
  check_etas("eval.vertex_eta", eval.vertex_eta);
  check_etas("eval.structural_eta", eval.structural_eta);
  wrap("scene", [&] { scene.validate(); });
  wrap("train", [&] { train_config().validate(); });
  wrap("model", [&] { train.architecture.validate(); });
  wrap("infer", [&] { reconstruct_config().validate(); });
}

std::string RunConfig::to_text() const {
  std::string out;
  auto fs = fields(const_cast<RunConfig&>(*this));
  for (const auto& f : fs) out += std::string(f.key) + " = " + std::visit(Format{}, f.ref) + "\n";
  return out;
}

ConfigEntries parse_config_text(const std::string& text, const std::string& source) {
  ConfigEntries out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(source, n, "expected 'key = value'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError(source, n, "missing key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::string env_name(const std::string& key) {
  std::string out = "LCWIRE_";
  for (char ch : key) out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const ConfigEntries& flags,
                         const EnvLookup& env) {
  RunConfig c;
  if (file) {
    const std::string source = file->string();
    for (const auto& [k, v] : parse_config_text(read_text(*file), source)) {
      try {
        c.set(k, v);
      } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
      }
    }
  }
  if (env)
    for (const std::string& key : RunConfig::keys())
      if (auto v = env(env_name(key))) {
        try {
          c.set(key, *v);
        } catch (const ConfigError& e) {
          throw ConfigError(env_name(key) + ": " + e.what());
        }
      }
  for (const auto& [k, v] : flags) c.set(k, v);
  c.validate();
  return c;
}

}  // namespace lcwire
