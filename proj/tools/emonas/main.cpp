// emonas: command-line front end over the harness.
//
// Every stage reads and writes a workspace directory (EMONAS_WORKSPACE or
// --workspace) so stages can run one at a time or all at once via `run`.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "emonas/darts/search.hpp"
#include "emonas/errors.hpp"
#include "emonas/harness/config.hpp"
#include "emonas/harness/dot.hpp"
#include "emonas/harness/pipeline.hpp"
#include "emonas/harness/records.hpp"
#include "emonas/harness/synth.hpp"
#include "emonas/harness/workspace.hpp"
#include "emonas/rnn/select.hpp"

namespace fs = std::filesystem;
using namespace emonas;
using namespace emonas::harness;

namespace {

constexpr const char* kWorkspaceEnv = "EMONAS_WORKSPACE";

struct GlobalOptions {
  std::string workspace;
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string folds;
};

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

int fail(std::string_view code, std::string_view message, int status = 1) {
  std::cerr << "error: code=" << code << " message=\"" << escape(message) << "\"\n";
  return status;
}

void warn(std::string_view message) { std::cerr << "warning: " << message << '\n'; }

// Everything a stage needs: the resolved configuration and the workspace.
struct Context {
  PipelineConfig config;
  Workspace ws{"."};
};

Context resolve(const GlobalOptions& g, const KeyValues& stage_overrides) {
  Context ctx;
  fs::path root = g.workspace;
  if (root.empty()) {
    if (const char* env = std::getenv(kWorkspaceEnv); env && *env) root = env;
  }
  if (root.empty()) {
    throw ConfigError(std::string("no workspace: pass --workspace or set ") + kWorkspaceEnv);
  }
  ctx.ws = Workspace(root);

  KeyValues values;
  if (!g.config_file.empty()) values = read_key_values(g.config_file);
  for (const auto& o : g.overrides) {
    auto [k, v] = parse_override(o);
    values[k] = v;
  }
  if (g.seed) values["seed"] = std::to_string(*g.seed);
  if (!g.folds.empty()) values["folds"] = g.folds;
  for (const auto& [k, v] : stage_overrides) values[k] = v;
  harness::apply(ctx.config, values);
  return ctx;
}

void record_run(const Context& ctx, std::string_view command) {
  write_text(ctx.ws.run_manifest(command), run_manifest_text(command, ctx.config));
}

struct Loaded {
  StoredFeatures stored;
  std::vector<Fold> folds;
  std::vector<std::size_t> selected;
};

Loaded load(const Context& ctx) {
  Loaded l;
  l.stored = load_features(ctx.ws, ctx.config.spectrogram);
  validate_records(l.stored.records);
  l.folds = make_folds(l.stored.records);
  l.selected = selected_folds(ctx.config, l.folds.size());
  return l;
}

void log(std::string_view line) { std::cout << line << std::endl; }

std::string ua(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---- stages ----

void cmd_synth(const Context& ctx, const std::string& out) {
  const fs::path dir = out.empty() ? ctx.ws.data_dir() : fs::path(out);
  const auto records = synth_dataset(ctx.config.synth, dir);
  log("synth: wrote " + std::to_string(records.size()) + " utterances to " + dir.string());
}

void cmd_features(const Context& ctx, const std::string& manifest) {
  const fs::path path = manifest.empty() ? ctx.ws.data_manifest() : fs::path(manifest);
  const auto records = read_manifest(path);
  validate_records(records);
  const FeatureSet features = extract_features(records, ctx.config.spectrogram);
  save_features(ctx.ws, features, records, ctx.config.spectrogram);
  log("features: " + std::to_string(records.size()) + " utterances -> " +
      ctx.ws.features_dir().string());
}

void cmd_search(const Context& ctx) {
  if (ctx.config.search.epochs == 0) {
    warn("search.epochs = 0: no search steps run; writing the initialisation genotype");
  }
  const Loaded l = load(ctx);
  for (std::size_t f : l.selected) {
    const auto result = search_spectrogram(l.stored.features, l.folds[f], f, ctx.config);
    const fs::path dir = ctx.ws.stage_dir(f, "search");
    write_text(dir / "genotype.json", darts::to_json(result.genotype));
    write_text(dir / "genotype.dot", export_dot(result.genotype));
    write_text(dir / "history.csv", darts::history_csv(result.history, ctx.config.network));
    log("search: fold " + std::to_string(f) + " -> " + (dir / "genotype.json").string());
  }
}

void cmd_select(const Context& ctx) {
  const Loaded l = load(ctx);
  for (std::size_t f : l.selected) {
    const auto run = select_sequence_cell(l.stored.features, l.folds[f], f, ctx.config);
    const fs::path dir = ctx.ws.stage_dir(f, "select");
    write_text(dir / "ranking.csv", rnn::selection_csv(run.selection));
    write_text(dir / "cell.json", rnn::to_json(*run.cell));
    write_text(dir / "cell.dot", export_dot(*run.cell));
    log("select: fold " + std::to_string(f) + " -> " + run.selection.best);
  }
}

void cmd_train(const Context& ctx, const std::string& branch) {
  const Loaded l = load(ctx);
  const bool spec = branch == "spectrogram" || branch == "all";
  const bool seq = branch == "sequence" || branch == "all";
  for (std::size_t f : l.selected) {
    if (spec) {
      const auto g =
          darts::genotype_from_json(read_text(ctx.ws.stage_dir(f, "search") / "genotype.json"));
      const auto out = train_spectrogram(g, l.stored.features, l.folds[f], f, ctx.config);
      save_branch_outputs(ctx.ws.stage_dir(f, "spectrogram"), out);
      log("train: fold " + std::to_string(f) + " spectrogram UA " +
          ua(out.test_metrics.unweighted_accuracy));
    }
    if (seq) {
      const auto cell = rnn::cell_from_json(read_text(ctx.ws.stage_dir(f, "select") / "cell.json"));
      const auto out = train_sequence(cell, l.stored.features, l.folds[f], f, ctx.config);
      save_branch_outputs(ctx.ws.stage_dir(f, "sequence"), out);
      log("train: fold " + std::to_string(f) + " sequence UA " +
          ua(out.test_metrics.unweighted_accuracy));
    }
  }
}

void save_fusion(const fs::path& dir, const FusionRun& run) {
  write_text(dir / "test_interchange.csv", fusion::interchange_csv(run.test_rows));
  std::vector<std::string> ids;
  std::vector<int> labels;
  for (const auto& r : run.test_rows) {
    ids.push_back(r.id);
    labels.push_back(r.label);
  }
  write_text(dir / "test_probabilities.csv", probabilities_csv(ids, run.test_probs, labels));
  write_text(dir / "metrics.csv", metrics_csv(run.test_metrics));
  write_text(dir / "training.csv", training_csv(run.report));
}

void cmd_fuse(const Context& ctx) {
  const Loaded l = load(ctx);
  for (std::size_t f : l.selected) {
    const auto spec = load_branch_outputs(ctx.ws.stage_dir(f, "spectrogram"));
    const auto seq = load_branch_outputs(ctx.ws.stage_dir(f, "sequence"));
    const auto run = run_fusion(spec, seq, f, ctx.config);
    save_fusion(ctx.ws.stage_dir(f, "fusion"), run);
    log("fuse: fold " + std::to_string(f) + " fused UA " +
        ua(run.test_metrics.unweighted_accuracy));
  }
}

void cmd_eval(const Context& ctx) {
  const Loaded l = load(ctx);
  std::vector<EvalRow> rows;
  for (std::size_t f : l.selected) {
    auto metrics = [&](std::string_view stage) {
      return parse_metrics_csv(read_text(ctx.ws.stage_dir(f, stage) / "metrics.csv"));
    };
    const auto spec = metrics("spectrogram"), seq = metrics("sequence"), fused = metrics("fusion");
    rows.push_back({f, l.folds[f].session, spec.unweighted_accuracy, seq.unweighted_accuracy,
                    fused.unweighted_accuracy, spec.parameter_count, seq.parameter_count,
                    fused.parameter_count});
  }
  const std::string csv = eval_csv(rows);
  write_text(ctx.ws.eval_csv(), csv);
  std::cout << csv;
}

void cmd_run(const Context& ctx) {
  const Loaded l = load(ctx);
  if (ctx.config.search.epochs == 0) {
    warn("search.epochs = 0: no search steps run; using the initialisation genotype");
  }
  PipelineResult result;
  for (std::size_t f : l.selected) {
    FoldResult r = run_fold(l.stored.features, l.folds[f], f, ctx.config);
    const fs::path search = ctx.ws.stage_dir(f, "search");
    write_text(search / "genotype.json", darts::to_json(r.spectrogram.search.genotype));
    write_text(search / "genotype.dot", export_dot(r.spectrogram.search.genotype));
    write_text(search / "history.csv",
               darts::history_csv(r.spectrogram.search.history, ctx.config.network));
    const fs::path select = ctx.ws.stage_dir(f, "select");
    write_text(select / "ranking.csv", rnn::selection_csv(r.sequence.selection));
    write_text(select / "cell.json", rnn::to_json(*r.sequence.cell));
    write_text(select / "cell.dot", export_dot(*r.sequence.cell));
    save_branch_outputs(ctx.ws.stage_dir(f, "spectrogram"), r.spectrogram.outputs);
    save_branch_outputs(ctx.ws.stage_dir(f, "sequence"), r.sequence.outputs);
    save_fusion(ctx.ws.stage_dir(f, "fusion"), r.fused);
    log("run: fold " + std::to_string(f) + " spectrogram " +
        ua(r.spectrogram.outputs.test_metrics.unweighted_accuracy) + " sequence " +
        ua(r.sequence.outputs.test_metrics.unweighted_accuracy) + " fused " +
        ua(r.fused.test_metrics.unweighted_accuracy));
    result.folds.push_back(std::move(r));
  }
  const std::string csv = eval_csv(result);
  write_text(ctx.ws.eval_csv(), csv);
  std::cout << csv;
}

void cmd_export_dot(const std::string& genotype, const std::string& cell, const std::string& out) {
  std::string dot;
  if (!genotype.empty()) {
    dot = export_dot(darts::genotype_from_json(read_text(genotype)));
  } else {
    dot = export_dot(rnn::cell_from_json(read_text(cell)));
  }
  if (out.empty()) {
    std::cout << dot;
  } else {
    write_text(out, dot);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"emonas: differentiable architecture search for speech emotion recognition"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("-w,--workspace", g.workspace,
                 std::string("Workspace root (default: $") + kWorkspaceEnv + ")");
  app.add_option("-c,--config", g.config_file, "Key-value configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("-s,--set", g.overrides, "Override one key: --set key=value (repeatable)");
  app.add_option("--seed", g.seed, "Root seed (same as --set seed=N)");
  app.add_option("--folds", g.folds, "Fold indices, e.g. 0,2, or 'all'");

  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic two-modality corpus");
  synth->add_option("-o,--out", synth_out, "Output directory (default: <workspace>/data)");

  std::string manifest;
  auto* features = app.add_subcommand(
      "features", "Extract spectrograms from WAV files and ingest sequence matrices");
  features->add_option("-m,--manifest", manifest,
                       "Record manifest (default: <workspace>/data/manifest.csv)");

  std::optional<std::size_t> search_epochs;
  auto* search = app.add_subcommand("search", "Search the spectrogram-branch cell per fold");
  search->add_option("--epochs", search_epochs, "Search epochs (same as --set search.epochs=N)");

  auto* select = app.add_subcommand("select", "Select the sequence-branch cell from the bank");

  std::string branch = "all";
  auto* train = app.add_subcommand("train", "Retrain the derived network and the selected cell");
  train->add_option("-b,--branch", branch, "spectrogram, sequence or all")
      ->check(CLI::IsMember({"spectrogram", "sequence", "all"}));

  auto* fuse = app.add_subcommand("fuse", "Fit the fusion network on branch outputs");
  auto* eval = app.add_subcommand("eval", "Tabulate per-fold and mean UA as CSV");
  auto* run = app.add_subcommand("run", "Search, select, train, fuse and eval in one go (needs features)");

  std::string dot_genotype, dot_cell, dot_out;
  auto* dot = app.add_subcommand("export-dot", "Write a genotype or recurrent cell as DOT");
  auto* g_opt = dot->add_option("--genotype", dot_genotype, "Genotype JSON file")
                    ->check(CLI::ExistingFile);
  auto* c_opt = dot->add_option("--cell", dot_cell, "Recurrent cell JSON file")
                    ->check(CLI::ExistingFile);
  g_opt->excludes(c_opt);
  dot->add_option("-o,--out", dot_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (dot->parsed()) {
      if (dot_genotype.empty() && dot_cell.empty()) {
        return fail("usage", "export-dot needs --genotype or --cell", 2);
      }
      cmd_export_dot(dot_genotype, dot_cell, dot_out);
      return 0;
    }
    KeyValues stage;
    if (search_epochs) stage["search.epochs"] = std::to_string(*search_epochs);
    const Context ctx = resolve(g, stage);
    const std::string command = app.get_subcommands().front()->get_name();
    record_run(ctx, command);
    if (synth->parsed()) cmd_synth(ctx, synth_out);
    if (features->parsed()) cmd_features(ctx, manifest);
    if (search->parsed()) cmd_search(ctx);
    if (select->parsed()) cmd_select(ctx);
    if (train->parsed()) cmd_train(ctx, branch);
    if (fuse->parsed()) cmd_fuse(ctx);
    if (eval->parsed()) cmd_eval(ctx);
    if (run->parsed()) cmd_run(ctx);
    return 0;
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
