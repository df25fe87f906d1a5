#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "doctest.h"
#include "drive/commands.hpp"
#include "drive/model_io.hpp"
#include "temp_dir.hpp"

using namespace drive;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int code;
  std::string out;
};

RunResult run_cli(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd =
      std::string("\"") + DRIVE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

ModelFile tiny_model_file() {
  ModelConfig mc;
  mc.hidden_size = 4;
  mc.num_steps = 6;
  ModelFile f;
  f.model = SnnModel::initialize(mc, 3);
  f.model.layers[1].bn.running_mean[2] = 0.1 + 1e-17;
  f.model.layers[2].bias[1] = -1.0 / 3.0;
  f.best_epoch = 4;
  f.best_test_loss = 0.123456789012345678;
  f.stopped_epoch = 9;
  f.train.encoding = EncodingMode::kConstantCurrent;
  return f;
}

}  // namespace

TEST_CASE("model file round trip is byte and bit exact") {
  TempDir tmp("model");
  const auto f = tiny_model_file();
  save_model(tmp.path() / "a.json", f);
  const auto loaded = load_model(tmp.path() / "a.json");
  CHECK(loaded.model == f.model);
  CHECK(loaded.best_test_loss == f.best_test_loss);
  CHECK(loaded.best_epoch == 4);
  CHECK(loaded.stopped_epoch == 9);
  CHECK(loaded.train.encoding == EncodingMode::kConstantCurrent);
  CHECK(loaded.model.config.num_steps == 6);
  save_model(tmp.path() / "b.json", loaded);
  CHECK(slurp(tmp.path() / "a.json") == slurp(tmp.path() / "b.json"));

  SpikeBatch s(6, 2, kImagePixels);
  Rng rng(1);
  for (auto& b : s.bits) b = rng.next_double() < 0.3;
  const auto in = InputBatch::spikes(s);
  const auto a = forward_pass(std::as_const(f.model), in, Mode::kEval);
  const auto b = forward_pass(std::as_const(loaded.model), in, Mode::kEval);
  for (std::size_t t = 0; t < 6; ++t) {
    CHECK(a.outputs()[t] == b.outputs()[t]);
    CHECK(a.layers[2].pre_membrane[t] == b.layers[2].pre_membrane[t]);
  }
}

TEST_CASE("model parser rejects bad input") {
  const auto text = serialize_model(tiny_model_file());
  auto bumped = text;
  const auto pos = bumped.find("\"format_version\": 1");
  REQUIRE(pos != std::string::npos);
  bumped.replace(pos, 19, "\"format_version\": 2");
  CHECK_THROWS_AS(parse_model(bumped), ModelFormatError);
  CHECK_THROWS_AS(parse_model(text.substr(0, text.size() / 2)), ModelFormatError);
  CHECK_THROWS_AS(parse_model("{}"), ModelFormatError);
  CHECK_THROWS(load_model("/nonexistent/model.json"));
}

TEST_CASE("cmd_synth validates and is reproducible") {
  TempDir tmp("synth");
  std::ostringstream out, err;
  CHECK(cmd_synth({tmp.path() / "x", 0, 1}, out, err) == kExitUsage);
  CHECK(err.str().find("per-class") != std::string::npos);

  CHECK(cmd_synth({tmp.path() / "a", 2, 5}, out, err) == kExitOk);
  CHECK(cmd_synth({tmp.path() / "b", 2, 5}, out, err) == kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp.path() / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), tmp.path() / "a");
    CHECK(slurp(e.path()) == slurp(tmp.path() / "b" / rel));
  }
  CHECK(files == 4);
}

TEST_CASE("train, eval and predict on a small synthetic corpus") {
  TempDir tmp("pipeline");
  std::ostringstream out, err;
  REQUIRE(cmd_synth({tmp.path() / "data", 6, 2}, out, err) == kExitOk);

  TrainOptions t;
  t.vehicles = tmp.path() / "data" / "vehicle";
  t.non_vehicles = tmp.path() / "data" / "non-vehicle";
  t.model_out = tmp.path() / "model.json";
  t.metrics_dir = tmp.path() / "metrics";
  t.model.hidden_size = 8;
  t.model.num_steps = 5;
  t.train.epochs = 2;
  t.train.batch_size = 4;
  std::ostringstream tout, terr;
  REQUIRE(cmd_train(t, tout, terr) == kExitOk);
  CHECK(tout.str().find("epoch, train_loss, train_acc, test_loss, test_acc") != std::string::npos);
  CHECK(tout.str().find("\n1, ") != std::string::npos);
  CHECK(tout.str().find("\n2, ") != std::string::npos);
  const auto curves = slurp(t.metrics_dir / kCurvesFile);
  CHECK(curves.rfind("epoch,train_loss,train_acc,test_loss,test_acc\n", 0) == 0);
  CHECK(slurp(t.metrics_dir / kRocFile).rfind("fpr,tpr\n", 0) == 0);
  const auto report = slurp(t.metrics_dir / kReportFile);
  CHECK(report.find("accuracy,") != std::string::npos);
  CHECK(report.find("auc,") != std::string::npos);
  CHECK(report.find("tp,") != std::string::npos);
  CHECK(fs::exists(t.model_out));

  EvalOptions e{t.model_out, t.vehicles, t.non_vehicles, tmp.path() / "eval", std::nullopt};
  std::ostringstream eout, eerr;
  CHECK(cmd_eval(e, eout, eerr) == kExitOk);
  CHECK(eout.str().find("on 12 images") != std::string::npos);
  CHECK(fs::exists(tmp.path() / "eval" / kReportFile));

  std::ostringstream pout, perr;
  const auto image = *fs::directory_iterator(t.vehicles);
  CHECK(cmd_predict({t.model_out, image.path(), std::nullopt}, pout, perr) == kExitOk);
  const auto line = pout.str();
  CHECK((line.rfind("vehicle ", 0) == 0 || line.rfind("non-vehicle ", 0) == 0));

  t.train.epochs = 0;
  std::ostringstream bout, berr;
  CHECK(cmd_train(t, bout, berr) == kExitUsage);
}

TEST_CASE("predict with an untrained model on a black image") {
  TempDir tmp("predict");
  ModelFile f;
  f.model = SnnModel::initialize(ModelConfig{}, 1);
  save_model(tmp.path() / "m.json", f);
  std::vector<float> black(kImagePixels, 0.0f);
  write_png_gray(tmp.path() / "black.png", black, kImageSide);

  std::ostringstream out, err;
  CHECK(cmd_predict({tmp.path() / "m.json", tmp.path() / "black.png", std::nullopt}, out, err) ==
        kExitOk);
  CHECK(out.str() == "non-vehicle 0.5\n");

  std::ostringstream out2, err2;
  CHECK(cmd_predict({tmp.path() / "m.json", tmp.path() / "missing.png", std::nullopt}, out2,
                    err2) != kExitOk);
  CHECK(err2.str().find("error:") == 0);

  std::ofstream(tmp.path() / "broken.json") << "{\"format_version\": 1, \"layers\": [";
  std::ostringstream out3, err3;
  CHECK(cmd_predict({tmp.path() / "broken.json", tmp.path() / "black.png", std::nullopt}, out3,
                    err3) == kExitFailure);
}

TEST_CASE("command-line binary") {
  TempDir tmp("binary");
  auto r = run_cli("--help", tmp.path());
  CHECK(r.code == 0);
  CHECK(r.out.find("train") != std::string::npos);

  r = run_cli("train --help", tmp.path());
  CHECK(r.code == 0);
  CHECK(r.out.find("--patience") != std::string::npos);

  r = run_cli("", tmp.path());
  CHECK(r.code != 0);

  r = run_cli("synth --out \"" + (tmp.path() / "d").string() + "\" --per-class 0", tmp.path());
  CHECK(r.code == kExitUsage);

  r = run_cli("train --vehicles a --non-vehicles b --out m.json --metrics m --epochs 0",
              tmp.path());
  CHECK(r.code == kExitUsage);

  r = run_cli("train --vehicles a --non-vehicles b --out m.json --metrics m --encoding morse",
              tmp.path());
  CHECK(r.code == kExitUsage);

  r = run_cli("synth --out \"" + (tmp.path() / "d").string() + "\" --per-class 1", tmp.path());
  CHECK(r.code == 0);
  CHECK(fs::exists(tmp.path() / "d" / "vehicle"));

  r = run_cli("predict --model \"" + (tmp.path() / "none.json").string() + "\" --image x.png",
              tmp.path());
  CHECK(r.code != 0);
}
