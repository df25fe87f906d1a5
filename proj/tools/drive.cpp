// Command-line front end: synth | train | eval | predict.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "drive/commands.hpp"
#include "drive/data.hpp"

int main(int argc, char** argv) {
  using namespace drive;

  CLI::App app{"Spiking neural network vehicle classifier"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic vehicle/non-vehicle PNG corpus");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--per-class", synth.per_class, "Images per class")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

  TrainOptions train;
  std::string train_encoding = "rate";
  auto* train_cmd = app.add_subcommand(
      "train",
      "Train on two image directories. Early stopping monitors the held-out split, which is "
      "therefore not an unbiased estimate of generalization.");
  train_cmd->add_option("--vehicles", train.vehicles, "Directory of vehicle images")->required();
  train_cmd->add_option("--non-vehicles", train.non_vehicles, "Directory of non-vehicle images")
      ->required();
  train_cmd->add_option("--out", train.model_out, "Model file to write")->required();
  train_cmd->add_option("--metrics", train.metrics_dir, "Directory for CSV exports")->required();
  train_cmd->add_option("--batch-size", train.train.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train.train.learning_rate, "AdamW learning rate")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.train.epochs)->capture_default_str();
  train_cmd->add_option("--patience", train.train.patience)->capture_default_str();
  train_cmd->add_option("--weight-decay", train.train.weight_decay)->capture_default_str();
  train_cmd->add_option("--beta1", train.train.beta1)->capture_default_str();
  train_cmd->add_option("--beta2", train.train.beta2)->capture_default_str();
  train_cmd->add_option("--adam-eps", train.train.adam_epsilon)->capture_default_str();
  train_cmd->add_option("--hidden", train.model.hidden_size, "Hidden layer size")
      ->capture_default_str();
  train_cmd->add_option("--steps", train.model.num_steps, "Simulation steps per image")
      ->capture_default_str();
  train_cmd->add_option("--beta", train.model.lif.beta, "Membrane decay factor")
      ->capture_default_str();
  train_cmd->add_option("--threshold", train.model.lif.threshold, "Firing threshold")
      ->capture_default_str();
  train_cmd->add_option("--slope", train.model.lif.surrogate_slope, "Surrogate slope")
      ->capture_default_str();
  train_cmd->add_option("--encoding", train_encoding, "rate or current")->capture_default_str();
  train_cmd->add_option("--train-fraction", train.train_fraction)->capture_default_str();
  train_cmd->add_option("--seed", train.train.seed, "Random seed")->capture_default_str();

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model on image directories");
  eval_cmd->add_option("--model", eval.model, "Model file")->required();
  eval_cmd->add_option("--vehicles", eval.vehicles)->required();
  eval_cmd->add_option("--non-vehicles", eval.non_vehicles)->required();
  eval_cmd->add_option("--metrics", eval.metrics_dir, "Directory for CSV exports")->required();
  eval_cmd->add_option("--seed", eval.seed, "Encoding seed (default: the model's)");

  PredictOptions pred;
  auto* predict_cmd = app.add_subcommand("predict", "Classify one image");
  predict_cmd->add_option("--model", pred.model, "Model file")->required();
  predict_cmd->add_option("--image", pred.image, "PNG image")->required();
  predict_cmd->add_option("--seed", pred.seed, "Encoding seed (default: the model's)");

  CLI11_PARSE(app, argc, argv);

  if (*synth_cmd) return cmd_synth(synth, std::cout, std::cerr);
  if (*train_cmd) {
    try {
      train.train.encoding = parse_encoding(train_encoding);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }
    return cmd_train(train, std::cout, std::cerr);
  }
  if (*eval_cmd) return cmd_eval(eval, std::cout, std::cerr);
  if (*predict_cmd) return cmd_predict(pred, std::cout, std::cerr);
  return kExitUsage;
}
