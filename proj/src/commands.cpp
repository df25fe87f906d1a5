#include "drive/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "drive/data.hpp"
#include "drive/model_io.hpp"

namespace drive {

namespace fs = std::filesystem;

namespace {

using Rows = std::vector<std::pair<std::string, std::string>>;

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

void echo_config(Rows& rows, const ModelConfig& m, const TrainConfig& t) {
  rows.emplace_back("input_size", std::to_string(m.input_size));
  rows.emplace_back("hidden_size", std::to_string(m.hidden_size));
  rows.emplace_back("num_classes", std::to_string(m.num_classes));
  rows.emplace_back("num_steps", std::to_string(m.num_steps));
  rows.emplace_back("lif_beta", format_double(m.lif.beta));
  rows.emplace_back("threshold", format_double(m.lif.threshold));
  rows.emplace_back("surrogate_slope", format_double(m.lif.surrogate_slope));
  rows.emplace_back("batch_size", std::to_string(t.batch_size));
  rows.emplace_back("learning_rate", format_double(t.learning_rate));
  rows.emplace_back("epochs", std::to_string(t.epochs));
  rows.emplace_back("patience", std::to_string(t.patience));
  rows.emplace_back("weight_decay", format_double(t.weight_decay));
  rows.emplace_back("beta1", format_double(t.beta1));
  rows.emplace_back("beta2", format_double(t.beta2));
  rows.emplace_back("adam_epsilon", format_double(t.adam_epsilon));
  rows.emplace_back("seed", std::to_string(t.seed));
  rows.emplace_back("encoding", encoding_name(t.encoding));
}

/// Accuracy, confusion counts and AUC of an evaluation pass. The ROC is
/// empty when only one class is present.
Rows metric_rows(const EvalResult& r, RocCurve& roc) {
  const auto cm = confusion(r.labels, r.predictions);
  Rows rows;
  rows.emplace_back("samples", std::to_string(r.labels.size()));
  rows.emplace_back("loss", format_double(r.loss));
  rows.emplace_back("accuracy", format_double(r.accuracy));
  std::string auc = "undefined";
  try {
    roc = roc_auc(r.labels, r.positive_scores);
    auc = format_double(roc.auc);
  } catch (const UndefinedAucError&) {
    roc = {};
  }
  rows.emplace_back("auc", auc);
  rows.emplace_back("tp", std::to_string(cm.tp));
  rows.emplace_back("tn", std::to_string(cm.tn));
  rows.emplace_back("fp", std::to_string(cm.fp));
  rows.emplace_back("fn", std::to_string(cm.fn));
  return rows;
}

void print_warnings(const LoadReport& report, std::ostream& err) {
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void write_curves_csv(const fs::path& path, const TrainReport& report) {
  auto out = open_output(path);
  out << "epoch,train_loss,train_acc,test_loss,test_acc\n";
  for (std::size_t i = 0; i < report.train_loss.size(); ++i) {
    out << (i + 1) << ',' << format_double(report.train_loss[i]) << ','
        << format_double(report.train_accuracy[i]) << ',' << format_double(report.test_loss[i])
        << ',' << format_double(report.test_accuracy[i]) << '\n';
  }
}

void write_roc_csv(const fs::path& path, const RocCurve& roc) {
  auto out = open_output(path);
  out << "fpr,tpr\n";
  for (const auto& p : roc.points) out << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
}

void write_report_csv(const fs::path& path, const Rows& rows) {
  auto out = open_output(path);
  out << "key,value\n";
  for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
}

int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.per_class < 1) throw std::invalid_argument("--per-class must be >= 1");
    if (opts.out.empty()) throw std::invalid_argument("--out is required");
    const auto ds = synth_dataset(opts.per_class, opts.seed);
    write_dataset(ds, opts.out);
    out << "wrote " << ds.size() << " images to " << opts.out.string() << "\n";
    return kExitOk;
  });
}

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    opts.model.validate();
    opts.train.validate();
    if (opts.model.input_size != kImagePixels) {
      throw std::invalid_argument("model input size must be " + std::to_string(kImagePixels));
    }
    ensure_directory(opts.metrics_dir);

    const auto start = std::chrono::steady_clock::now();
    const auto loaded = load_directory(opts.vehicles, opts.non_vehicles);
    print_warnings(loaded, err);
    const auto [train, test] = split_shuffle(loaded.dataset, opts.train.seed, opts.train_fraction);
    if (train.empty() || test.empty()) {
      throw EmptyDatasetError("dataset of " + std::to_string(loaded.dataset.size()) +
                              " images is too small to split");
    }
    out << "loaded " << loaded.dataset.size() << " images (" << train.size() << " train, "
        << test.size() << " test)\n";
    out << "epoch, train_loss, train_acc, test_loss, test_acc\n";

    auto model = SnnModel::initialize(opts.model, opts.train.seed);
    const auto report = fit(model, train, test, opts.train,
                            [&](std::size_t epoch, const EpochMetrics& tr, const EpochMetrics& te) {
                              char line[160];
                              std::snprintf(line, sizeof(line), "%zu, %.4f, %.4f, %.4f, %.4f\n",
                                            epoch, tr.loss, tr.accuracy, te.loss, te.accuracy);
                              out << line << std::flush;
                            });
    if (report.early_stopped) {
      out << "early stop after epoch " << report.stopped_epoch << "; ";
    } else {
      out << "ran all " << report.stopped_epoch << " epochs; ";
    }
    out << "best epoch " << report.best_epoch << " (test loss "
        << format_double(report.best_test_loss) << ")\n";

    ModelFile file{kModelFormatVersion, model, opts.train, report.best_epoch,
                   report.best_test_loss, report.stopped_epoch};
    save_model(opts.model_out, file);

    const auto eval = evaluate_detailed(model, test, opts.train);
    RocCurve roc;
    Rows rows{{"split", "test"}};
    for (auto& r : metric_rows(eval, roc)) rows.push_back(std::move(r));
    rows.emplace_back("best_epoch", std::to_string(report.best_epoch));
    rows.emplace_back("best_test_loss", format_double(report.best_test_loss));
    rows.emplace_back("stopped_epoch", std::to_string(report.stopped_epoch));
    rows.emplace_back("train_samples", std::to_string(train.size()));
    rows.emplace_back("skipped_files", std::to_string(loaded.skipped));
    echo_config(rows, opts.model, opts.train);

    write_curves_csv(opts.metrics_dir / kCurvesFile, report);
    write_roc_csv(opts.metrics_dir / kRocFile, roc);
    write_report_csv(opts.metrics_dir / kReportFile, rows);

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char line[160];
    std::snprintf(line, sizeof(line), "test accuracy %.4f, auc %s, %.1f s\n", eval.accuracy,
                  roc.points.empty() ? "undefined" : format_double(roc.auc).c_str(), secs);
    out << line;
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto file = load_model(opts.model);
    if (opts.seed) file.train.seed = *opts.seed;
    ensure_directory(opts.metrics_dir);
    const auto loaded = load_directory(opts.vehicles, opts.non_vehicles);
    print_warnings(loaded, err);

    const auto eval = evaluate_detailed(file.model, loaded.dataset, file.train);
    RocCurve roc;
    Rows rows{{"split", "all"}};
    for (auto& r : metric_rows(eval, roc)) rows.push_back(std::move(r));
    rows.emplace_back("skipped_files", std::to_string(loaded.skipped));
    echo_config(rows, file.model.config, file.train);
    write_roc_csv(opts.metrics_dir / kRocFile, roc);
    write_report_csv(opts.metrics_dir / kReportFile, rows);

    out << "accuracy " << format_double(eval.accuracy) << ", auc "
        << (roc.points.empty() ? "undefined" : format_double(roc.auc)) << " on "
        << eval.labels.size() << " images\n";
    return kExitOk;
  });
}

int cmd_predict(const PredictOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto file = load_model(opts.model);
    if (opts.seed) file.train.seed = *opts.seed;
    if (file.model.config.input_size != kImagePixels) {
      throw ModelFormatError("model input size does not match 128x128 images");
    }
    const auto pixels = preprocess(decode_png(opts.image));
    const ImageSample sample{std::vector<float>(pixels.begin(), pixels.end()), kNonVehicle,
                             opts.image.string()};
    const ImageSample* batch[] = {&sample};
    const auto input = rate_encode(batch, eval_encoder(file.train, file.model.config, 0));
    const auto trace = forward_pass(std::as_const(file.model), input, Mode::kEval);
    const auto pred = predict(trace.outputs());
    const int label = pred.classes[0];
    char line[96];
    std::snprintf(line, sizeof(line), "%s %.6g\n", class_name(label),
                  pred.scores(0, static_cast<std::size_t>(label)));
    out << line;
    return kExitOk;
  });
}

}  // namespace drive
