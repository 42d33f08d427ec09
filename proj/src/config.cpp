#include "lgse/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace lgse {

using nlohmann::json;

namespace {

template <class T>
T checked(const std::string& key, const json& v) {
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) {
    ok = v.is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    ok = v.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    ok = v.is_string();
  } else {
    ok = v.is_array();
  }
  if (!ok) throw ConfigError("config key '" + key + "': unexpected value " + v.dump());
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

template <class T, class Ref>
ConfigKey field(std::string key, std::string desc, std::string ref, Ref ref_of) {
  ConfigKey k;
  k.key = key;
  k.description = std::move(desc);
  k.reference = std::move(ref);
  k.get = [ref_of](const RunConfig& c) { return json(ref_of(const_cast<RunConfig&>(c))); };
  k.set = [ref_of, key](RunConfig& c, const json& v) { ref_of(c) = checked<T>(key, v); };
  return k;
}

template <class Parse, class Show, class Ref>
ConfigKey enum_field(std::string key, std::string desc, std::string ref, Ref ref_of, Parse parse, Show show) {
  ConfigKey k;
  k.key = key;
  k.description = std::move(desc);
  k.reference = std::move(ref);
  k.get = [ref_of, show](const RunConfig& c) { return json(show(ref_of(const_cast<RunConfig&>(c)))); };
  k.set = [ref_of, key, parse](RunConfig& c, const json& v) {
    const auto s = checked<std::string>(key, v);
    try {
      ref_of(c) = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  };
  return k;
}

std::vector<ConfigKey> build_keys() {
  using R = RunConfig;
  auto pe_parse = [](const std::string& s) { return parse_pe(s); };
  auto pe_show = [](PeKind k) { return to_string(k); };
  auto tg_parse = [](const std::string& s) { return parse_target(s); };
  auto tg_show = [](TargetKind k) { return to_string(k); };
  return {
      field<std::uint64_t>("seed", "root seed for every random stream", "", [](R& c) -> auto& { return c.seed; }),

      field<int>("model.layers", "Transformer layers N", "4", [](R& c) -> auto& { return c.model.layers; }),
      field<int>("model.heads", "attention heads H", "8", [](R& c) -> auto& { return c.model.heads; }),
      field<int>("model.d_model", "embedding width", "256", [](R& c) -> auto& { return c.model.d_model; }),
      field<int>("model.d_ff", "feed-forward width", "1024", [](R& c) -> auto& { return c.model.d_ff; }),
      field<int>("model.bins", "STFT bins K (512-point FFT)", "257", [](R& c) -> auto& { return c.model.bins; }),
      enum_field("model.pe", "positional encoding", "learnlin", [](R& c) -> auto& { return c.model.pe; }, pe_parse,
                 pe_show),
      enum_field("model.target", "training target (ms|irm|psm|cirm)", "irm",
                 [](R& c) -> auto& { return c.model.target; }, tg_parse, tg_show),
      field<bool>("model.causal", "mask attention to future frames", "false",
                  [](R& c) -> auto& { return c.model.causal; }),
      field<bool>("model.post_ln", "layer norm after each residual sum", "",
                  [](R& c) -> auto& { return c.model.post_ln; }),
      field<double>("model.ln_eps", "layer norm epsilon", "", [](R& c) -> auto& { return c.model.ln_eps; }),
      field<int>("model.tisa_kernels", "TISA kernels S", "5", [](R& c) -> auto& { return c.model.pe_cfg.tisa_kernels; }),
      field<int>("model.bert_max_len", "learned absolute table rows", "",
                 [](R& c) -> auto& { return c.model.pe_cfg.bert_max_len; }),
      field<double>("model.irm_gamma", "IRM exponent", "0.5", [](R& c) -> auto& { return c.model.objective.irm_gamma; }),
      field<double>("model.cirm_k", "cIRM compression bound", "10", [](R& c) -> auto& { return c.model.objective.cirm_k; }),
      field<double>("model.cirm_c", "cIRM compression steepness", "0.1",
                    [](R& c) -> auto& { return c.model.objective.cirm_c; }),
      field<double>("model.ms_power", "magnitude compression exponent", "0.3",
                    [](R& c) -> auto& { return c.model.objective.ms_power; }),

      field<double>("train.clip_len_s", "training clip length in seconds", "1 or 2",
                    [](R& c) -> auto& { return c.train.clip_len_s; }),
      field<int>("train.batch_utts", "clean utterances per batch", "10", [](R& c) -> auto& { return c.train.batch_utts; }),
      field<int>("train.snr_min", "lowest training SNR (dB)", "-10", [](R& c) -> auto& { return c.train.snr_min; }),
      field<int>("train.snr_max", "highest training SNR (dB)", "20", [](R& c) -> auto& { return c.train.snr_max; }),
      field<int>("train.epochs", "passes over the corpus", "150", [](R& c) -> auto& { return c.train.epochs; }),
      field<long>("train.max_steps", "step cap, 0 for none", "", [](R& c) -> auto& { return c.train.max_steps; }),
      field<long>("train.w_steps", "warmup steps", "40000", [](R& c) -> auto& { return c.train.w_steps; }),
      field<double>("train.beta1", "Adam beta1", "0.9", [](R& c) -> auto& { return c.train.adam.beta1; }),
      field<double>("train.beta2", "Adam beta2", "0.98", [](R& c) -> auto& { return c.train.adam.beta2; }),
      field<double>("train.eps", "Adam epsilon", "1e-9", [](R& c) -> auto& { return c.train.adam.eps; }),
      field<double>("train.grad_clip", "elementwise gradient bound", "1", [](R& c) -> auto& { return c.train.grad_clip; }),
      field<long>("train.checkpoint_every", "steps between checkpoints, 0 to disable", "",
                  [](R& c) -> auto& { return c.train.checkpoint_every; }),
      field<long>("train.validate_every", "steps between validation passes, 0 to disable", "",
                  [](R& c) -> auto& { return c.train.validate_every; }),

      field<std::vector<double>>("test.durations", "test utterance lengths (s)", "[1,2,5,10,15,20]",
                                 [](R& c) -> auto& { return c.test.durations; }),
      field<std::vector<int>>("test.snrs", "test SNRs (dB)", "[-5,0,5,10,15]", [](R& c) -> auto& { return c.test.snrs; }),
      field<int>("test.utts_per_condition", "mixtures per (duration, SNR)", "400 per test set",
                 [](R& c) -> auto& { return c.test.utts_per_condition; }),
      field<std::vector<std::string>>("test.kinds", "encodings compared by experiment", "",
                                      [](R& c) -> auto& { return c.test.kinds; }),
      field<double>("test.chunk_s", "chunk length for seg modes, 0 = clip length", "training length",
                    [](R& c) -> auto& { return c.test.chunk_s; }),

      field<int>("corpus.n_utts", "synthetic training utterances", "", [](R& c) -> auto& { return c.corpus.n_utts; }),
      field<double>("corpus.dur_s", "synthetic utterance length (s)", "", [](R& c) -> auto& { return c.corpus.dur_s; }),
      field<int>("corpus.valid_utts", "held-out validation utterances", "",
                 [](R& c) -> auto& { return c.corpus.valid_utts; }),

      field<std::string>("paths.corpus_dir", "corpus directory", "", [](R& c) -> auto& { return c.paths.corpus_dir; }),
      field<std::string>("paths.checkpoint", "checkpoint file", "", [](R& c) -> auto& { return c.paths.checkpoint; }),
      field<std::string>("paths.loss_csv", "loss trace CSV", "", [](R& c) -> auto& { return c.paths.loss_csv; }),
      field<std::string>("paths.out_dir", "experiment output directory", "",
                         [](R& c) -> auto& { return c.paths.out_dir; }),
  };
}

void validate(const RunConfig& c) {
  c.model.validate();
  if (c.train.snr_min > c.train.snr_max) throw ConfigError("train.snr_min exceeds train.snr_max");
  if (c.train.clip_len_s <= 0) throw ConfigError("train.clip_len_s must be positive");
  if (c.train.batch_utts < 1) throw ConfigError("train.batch_utts must be >= 1");
  if (c.train.w_steps < 1) throw ConfigError("train.w_steps must be >= 1");
  if (c.train.grad_clip <= 0) throw ConfigError("train.grad_clip must be positive");
  if (c.test.utts_per_condition < 1) throw ConfigError("test.utts_per_condition must be >= 1");
  for (const auto& k : c.test.kinds) {
    try {
      parse_pe(k);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("test.kinds: ") + e.what());
    }
  }
  if (c.corpus.n_utts < 1) throw ConfigError("corpus.n_utts must be >= 1");
  if (c.corpus.dur_s <= 0) throw ConfigError("corpus.dur_s must be positive");
}

const ConfigKey& find_key(const std::string& key) {
  for (const ConfigKey& k : config_keys())
    if (k.key == key) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (const auto& [name, value] : j.items()) {
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    if (value.is_object()) {
      const bool section = std::any_of(config_keys().begin(), config_keys().end(),
                                       [&](const ConfigKey& k) { return k.key.rfind(key + ".", 0) == 0; });
      if (!section) throw ConfigError("unknown config section '" + key + "'");
      flatten(value, key, out);
    }
    else
      out.emplace_back(key, value);
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

json to_json(const RunConfig& cfg) {
  json j = json::object();
  for (const ConfigKey& k : config_keys()) {
    std::string ptr = "/" + k.key;
    for (char& ch : ptr)
      if (ch == '.') ch = '/';
    j[json::json_pointer(ptr)] = k.get(cfg);
  }
  return j;
}

RunConfig from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::pair<std::string, json>> entries;
  flatten(j, "", entries);
  for (const auto& [key, value] : entries) find_key(key).set(base, value);
  base.train.seed = base.seed;
  validate(base);
  return base;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  RunConfig next = cfg;
  find_key(key).set(next, value);
  next.train.seed = next.seed;
  validate(next);
  cfg = std::move(next);
}

std::string config_help() {
  const RunConfig defaults;
  std::size_t width = 0;
  for (const ConfigKey& k : config_keys()) width = std::max(width, k.key.size());
  std::ostringstream os;
  os << "Config keys (JSON file sections; override with --set key=value):\n";
  for (const ConfigKey& k : config_keys()) {
    os << "  " << k.key << std::string(width - k.key.size() + 2, ' ') << k.description << "\n"
       << "  " << std::string(width + 2, ' ') << "default " << k.get(defaults).dump();
    os << "  [published: " << (k.reference.empty() ? "-" : k.reference) << "]";
    os << "\n";
  }
  return os.str();
}

json model_config_json(const ModelConfig& m) {
  RunConfig c;
  c.model = m;
  return to_json(c)["model"];
}

ModelConfig model_config_from_json(const json& j) {
  return from_json(json{{"model", j}}).model;
}

}  // namespace lgse
