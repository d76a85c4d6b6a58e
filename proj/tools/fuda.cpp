// ----------------------------------------------------------------------------
// Copyright 2026 The FUDA Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

// Command-line front end: gen-synth, pretrain-rain, train-seg, stylize,
// evaluate. Every flag overrides the matching key of --config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fuda/config.hpp"
#include "fuda/error.hpp"
#include "fuda/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> target_scope;
  std::optional<std::string> target_patient;
  std::optional<int> target_slice;
  std::optional<std::string> data_root;
  std::optional<int> threads;
  std::string out = "out";
};

fuda::RunConfig resolve(const Overrides& o) {
  fuda::RunConfig c = o.config_file.empty() ? fuda::default_config() : fuda::load_config(o.config_file);
  if (o.seed) c.seed = *o.seed;
  if (o.target_scope) c.data.target_scope = fuda::target_scope_from_string(*o.target_scope);
  if (o.target_patient) c.data.target_patient = *o.target_patient;
  if (o.target_slice) c.data.target_slice = *o.target_slice;
  if (o.data_root) c.data.root = *o.data_root;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

// The effective configuration is stored next to every command's outputs.
fuda::RunConfig prepare(const Overrides& o) {
  auto c = resolve(o);
  fs::create_directories(o.out);
  fuda::save_config(c, fs::path(o.out) / "config.json");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot domain adaptation for cardiac segmentation"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Root random seed");
  app.add_option("--target-scope", o.target_scope, "few-shot | one-shot | baseline")
      ->check(CLI::IsMember({"few-shot", "one-shot", "baseline"}));
  app.add_option("--target-patient", o.target_patient, "Patient id supplying target slices");
  app.add_option("--target-slice", o.target_slice, "Slice index used in one-shot mode");
  app.add_option("--data-root", o.data_root, "Dataset directory (empty: synthetic phantom)");
  app.add_option("--threads", o.threads, "Intra-op thread count");
  app.add_option("--out", o.out, "Output directory")->capture_default_str();

  auto* gen = app.add_subcommand("gen-synth", "Render the phantom dataset to --out");
  auto* pre = app.add_subcommand("pretrain-rain", "Stage 1: train the style-transfer network");

  auto* train = app.add_subcommand("train-seg", "Stage 2: train the segmenter");
  std::string rain_ckpt;
  train->add_option("--rain-ckpt", rain_ckpt, "RAIN checkpoint (default: <out>/rain.ckpt)");

  auto* sty = app.add_subcommand("stylize", "Write a content/stylized image grid");
  int n_content = 4;
  std::string eps_source = "target";
  sty->add_option("--rain-ckpt", rain_ckpt, "RAIN checkpoint (default: <out>/rain.ckpt)");
  sty->add_option("--n-content", n_content, "Number of content images")->capture_default_str();
  sty->add_option("--eps-source", eps_source, "target | prior")
      ->check(CLI::IsMember({"target", "prior"}))
      ->capture_default_str();

  auto* eval = app.add_subcommand("evaluate", "Score a segmenter on the test patients");
  std::string seg_ckpt, label = "FUDA";
  bool export_predictions = false;
  eval->add_option("--seg-ckpt", seg_ckpt, "Segmenter checkpoint (default: <out>/seg.ckpt)");
  eval->add_option("--label", label, "Method name in the report")->capture_default_str();
  eval->add_flag("--export-predictions", export_predictions, "Write predicted label maps");

  CLI11_PARSE(app, argc, argv);

  const fs::path out(o.out);
  auto or_default = [&](const std::string& s, const char* name) {
    return s.empty() ? out / name : fs::path(s);
  };

  try {
    if (gen->parsed()) {
      const auto c = resolve(o);
      std::cout << "wrote dataset to " << fuda::gen_synth_cmd(c, out).string() << '\n';
    } else if (pre->parsed()) {
      const auto c = prepare(o);
      const auto r = fuda::train_stage1(c, out);
      const auto& first = r.curve.front();
      const auto& last = r.curve.back();
      std::printf("held-out L_RAIN %.5f -> %.5f (iteration %d)\n", first.total, last.total,
                  last.iteration);
      std::cout << "checkpoint " << r.checkpoint.string() << '\n';
    } else if (train->parsed()) {
      const auto c = prepare(o);
      const auto r = fuda::train_stage2(c, or_default(rain_ckpt, "rain.ckpt"), out);
      std::cout << "scope " << fuda::to_string(c.data.target_scope) << ", checkpoint "
                << r.checkpoint.string() << '\n';
      if (r.aborted_ascents > 0)
        std::cout << r.aborted_ascents << " ascent steps skipped on non-finite gradients\n";
    } else if (sty->parsed()) {
      const auto c = prepare(o);
      const auto f = fuda::stylize_cmd(c, or_default(rain_ckpt, "rain.ckpt"), out, n_content,
                                       eps_source == "prior" ? fuda::EpsSource::kPrior
                                                             : fuda::EpsSource::kTarget);
      std::cout << "wrote " << f.string() << '\n';
    } else if (eval->parsed()) {
      const auto c = prepare(o);
      const auto r = fuda::evaluate_cmd(c, or_default(seg_ckpt, "seg.ckpt"), out, label,
                                        export_predictions);
      std::cout << fuda::metrics::report_table({{label, r.report}});
      std::printf("inference %.3f s per patient\n", r.seconds_per_patient);
    }
  } catch (const fuda::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const fuda::IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
