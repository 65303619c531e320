#include "emonas/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "emonas/errors.hpp"
#include "util/text.hpp"

namespace emonas::harness {

namespace {

struct Entry {
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class T>
T parse_unsigned(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  try {
    return util::parse_real(v, std::string(key));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  if (util::trim(v).empty()) return out;
  for (const auto& cell : util::split_csv(v)) out.emplace_back(util::trim(cell));
  return out;
}

std::vector<std::size_t> parse_index_list(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  if (util::trim(v) == "all") return out;
  for (const auto& item : split_list(v)) out.push_back(parse_unsigned<std::size_t>(key, item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& items, std::string_view empty) {
  if (items.empty()) return std::string(empty);
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << items[i];
  return os.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

#define EMONAS_SIZE(KEY, FIELD)                                                               \
  {KEY,                                                                                     \
   {[](PipelineConfig& c, std::string_view v) { c.FIELD = parse_unsigned<std::size_t>(KEY, v); }, \
    [](const PipelineConfig& c) { return std::to_string(c.FIELD); }}}
#define EMONAS_U64(KEY, FIELD)                                                                \
  {KEY,                                                                                     \
   {[](PipelineConfig& c, std::string_view v) { c.FIELD = parse_unsigned<std::uint64_t>(KEY, v); }, \
    [](const PipelineConfig& c) { return std::to_string(c.FIELD); }}}
#define EMONAS_UINT(KEY, FIELD)                                                               \
  {KEY,                                                                                     \
   {[](PipelineConfig& c, std::string_view v) { c.FIELD = parse_unsigned<unsigned>(KEY, v); }, \
    [](const PipelineConfig& c) { return std::to_string(c.FIELD); }}}
#define EMONAS_REAL(KEY, FIELD)                                                               \
  {KEY,                                                                                     \
   {[](PipelineConfig& c, std::string_view v) { c.FIELD = parse_double(KEY, v); },           \
    [](const PipelineConfig& c) { return util::format_real(c.FIELD); }}}
#define EMONAS_BOOL(KEY, FIELD)                                                               \
  {KEY,                                                                                     \
   {[](PipelineConfig& c, std::string_view v) { c.FIELD = parse_bool(KEY, v); },             \
    [](const PipelineConfig& c) { return fmt_bool(c.FIELD); }}}

train::OptimizerKind parse_optimizer(std::string_view key, std::string_view v) {
  if (v == "sgd") return train::OptimizerKind::sgd;
  if (v == "adam") return train::OptimizerKind::adam;
  throw ConfigError(std::string(key) + ": expected sgd or adam, got '" + std::string(v) + "'");
}
std::string fmt_optimizer(train::OptimizerKind k) {
  return k == train::OptimizerKind::sgd ? "sgd" : "adam";
}

const std::map<std::string, Entry, std::less<>>& registry() {
  static const std::map<std::string, Entry, std::less<>> entries = {
      EMONAS_U64("seed", seed),
      {"folds",
       {[](PipelineConfig& c, std::string_view v) { c.folds = parse_index_list("folds", v); },
        [](const PipelineConfig& c) { return join(c.folds, "all"); }}},

      EMONAS_SIZE("synth.sessions", synth.num_sessions),
      EMONAS_SIZE("synth.speakers_per_session", synth.speakers_per_session),
      EMONAS_SIZE("synth.utterances_per_class", synth.utterances_per_class),
      EMONAS_REAL("synth.noise", synth.noise),
      EMONAS_REAL("synth.min_duration", synth.min_duration),
      EMONAS_REAL("synth.max_duration", synth.max_duration),
      EMONAS_UINT("synth.sample_rate", synth.sample_rate),
      EMONAS_SIZE("synth.min_frames", synth.min_frames),
      EMONAS_SIZE("synth.max_frames", synth.max_frames),
      EMONAS_SIZE("synth.sequence_dim", synth.sequence_dim),
      EMONAS_SIZE("synth.band_start", synth.band_start),
      EMONAS_SIZE("synth.band_width", synth.band_width),
      EMONAS_BOOL("synth.complementary", synth.complementary),
      EMONAS_U64("synth.seed", synth.seed),

      EMONAS_REAL("features.duration", spectrogram.target_duration),
      EMONAS_REAL("features.window", spectrogram.window_length),
      EMONAS_REAL("features.overlap", spectrogram.window_overlap),
      EMONAS_SIZE("features.bins", spectrogram.feature_bins),
      EMONAS_SIZE("features.rows", spectrogram.output_rows),
      EMONAS_UINT("features.sample_rate", spectrogram.sample_rate),
      EMONAS_BOOL("features.standardize", standardize),

      {"network.cells",
       {[](PipelineConfig& c, std::string_view v) {
          c.network.num_cells = parse_unsigned<std::size_t>("network.cells", v);
          c.network.reduction_positions = darts::default_reduction_positions(c.network.num_cells);
        },
        [](const PipelineConfig& c) { return std::to_string(c.network.num_cells); }}},
      {"network.reductions",
       {[](PipelineConfig& c, std::string_view v) {
          c.network.reduction_positions.clear();
          if (util::trim(v) == "none") return;
          for (const auto& item : split_list(v)) {
            c.network.reduction_positions.push_back(
                parse_unsigned<std::size_t>("network.reductions", item));
          }
        },
        [](const PipelineConfig& c) { return join(c.network.reduction_positions, "none"); }}},
      EMONAS_SIZE("network.channels", network.channels),
      EMONAS_SIZE("network.nodes", network.num_nodes),
      EMONAS_SIZE("network.input_pool", network.input_pool),
      {"network.ops",
       {[](PipelineConfig& c, std::string_view v) {
          c.network.ops.clear();
          for (const auto& item : split_list(v)) {
            try {
              c.network.ops.push_back(space::parse_cnn_op(item));
            } catch (const Error& e) {
              throw ConfigError(std::string("network.ops: ") + e.what());
            }
          }
        },
        [](const PipelineConfig& c) {
          std::vector<std::string> names;
          for (auto op : c.network.ops) names.emplace_back(space::to_string(op));
          return join(names, "");
        }}},

      EMONAS_SIZE("search.epochs", search.epochs),
      EMONAS_SIZE("search.batch_size", search.batch_size),
      EMONAS_SIZE("search.nonfinite_patience", search.nonfinite_patience),
      EMONAS_REAL("search.weights_lr", search.optimizers.weights.lr),
      EMONAS_REAL("search.weights_momentum", search.optimizers.weights.momentum),
      EMONAS_REAL("search.weights_weight_decay", search.optimizers.weights.weight_decay),
      EMONAS_REAL("search.arch_lr", search.optimizers.architecture.lr),

      EMONAS_SIZE("retrain.epochs", retrain.epochs),
      EMONAS_SIZE("retrain.batch_size", retrain.batch_size),
      {"retrain.optimizer",
       {[](PipelineConfig& c, std::string_view v) {
          c.retrain.optimizer = parse_optimizer("retrain.optimizer", v);
        },
        [](const PipelineConfig& c) { return fmt_optimizer(c.retrain.optimizer); }}},
      EMONAS_REAL("retrain.sgd_lr", retrain.sgd.lr),
      EMONAS_REAL("retrain.sgd_momentum", retrain.sgd.momentum),
      EMONAS_REAL("retrain.sgd_weight_decay", retrain.sgd.weight_decay),
      EMONAS_REAL("retrain.adam_lr", retrain.adam.lr),
      EMONAS_BOOL("retrain.keep_best", retrain.keep_best),

      EMONAS_SIZE("rnn.layers", rnn.num_layers),
      EMONAS_SIZE("rnn.hidden", rnn.hidden),
      EMONAS_SIZE("rnn.attention_width", rnn.attention_width),
      EMONAS_BOOL("rnn.masking", rnn.masking),
      EMONAS_SIZE("rnn.epochs", rnn_schedule.epochs),
      EMONAS_SIZE("rnn.batch_size", rnn_schedule.batch_size),
      {"rnn.optimizer",
       {[](PipelineConfig& c, std::string_view v) {
          c.rnn_schedule.optimizer = parse_optimizer("rnn.optimizer", v);
        },
        [](const PipelineConfig& c) { return fmt_optimizer(c.rnn_schedule.optimizer); }}},
      EMONAS_REAL("rnn.adam_lr", rnn_schedule.adam.lr),
      EMONAS_REAL("rnn.sgd_lr", rnn_schedule.sgd.lr),
      EMONAS_BOOL("rnn.keep_best", rnn_schedule.keep_best),
      {"rnn.cell_bank",
       {[](PipelineConfig& c, std::string_view v) { c.cell_bank = std::string(v); },
        [](const PipelineConfig& c) { return c.cell_bank.generic_string(); }}},

      EMONAS_SIZE("fusion.epochs", fusion.epochs),
      EMONAS_SIZE("fusion.batch_size", fusion.batch_size),
      EMONAS_REAL("fusion.adam_lr", fusion.adam.lr),
  };
  return entries;
}

#undef EMONAS_SIZE
#undef EMONAS_U64
#undef EMONAS_UINT
#undef EMONAS_REAL
#undef EMONAS_BOOL

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = util::trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(util::trim(line.substr(0, eq)));
    if (key.empty()) throw FormatError("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, std::string(util::trim(line.substr(eq + 1)))).second) {
      throw FormatError("config line " + std::to_string(line_no) + ": key '" + key +
                        "' repeated");
    }
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_key_values(os.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::pair<std::string, std::string> parse_override(std::string_view text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string_view::npos || util::trim(text.substr(0, eq)).empty()) {
    throw ConfigError("override '" + std::string(text) + "' is not key=value");
  }
  return {std::string(util::trim(text.substr(0, eq))), std::string(util::trim(text.substr(eq + 1)))};
}

void apply(PipelineConfig& config, const KeyValues& values) {
  const auto& reg = registry();
  // Layout keys first so an explicit network.reductions wins over the
  // default placement implied by network.cells.
  if (auto it = values.find("network.cells"); it != values.end()) {
    reg.at("network.cells").set(config, it->second);
  }
  for (const auto& [key, value] : values) {
    if (key == "network.cells") continue;
    auto it = reg.find(key);
    if (it == reg.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(config, value);
  }
  validate(config);
}

std::string to_text(const PipelineConfig& config) {
  std::ostringstream os;
  for (const auto& [key, entry] : registry()) os << key << " = " << entry.get(config) << '\n';
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, entry] : registry()) keys.push_back(key);
  return keys;
}

void validate(const PipelineConfig& config) {
  config.synth.validate();
  config.spectrogram.validate();
  darts::NetworkConfig net = config.network;
  net.input_height = config.spectrogram.output_rows;
  net.input_width = config.spectrogram.feature_bins;
  net.validate();
  config.rnn.validate();
  if (config.search.batch_size == 0 || config.retrain.batch_size == 0 ||
      config.rnn_schedule.batch_size == 0 || config.fusion.batch_size == 0) {
    throw ConfigError("batch sizes must be positive");
  }
  for (real lr : {config.search.optimizers.weights.lr, config.search.optimizers.architecture.lr,
                  config.retrain.sgd.lr, config.retrain.adam.lr, config.rnn_schedule.adam.lr,
                  config.rnn_schedule.sgd.lr, config.fusion.adam.lr}) {
    if (!(lr > 0)) throw ConfigError("learning rates must be positive");
  }
}

}  // namespace emonas::harness
