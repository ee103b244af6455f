// Command-line surface: dataset generation, training, verification suites,
// and checkpoint inspection. Exit codes: 0 success, 1 verification/training
// failure, 2 usage or input error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "img/checkpoint.hpp"
#include "img/config.hpp"
#include "img/dataset.hpp"
#include "img/trainer.hpp"
#include "img/verify.hpp"

namespace fs = std::filesystem;

namespace {

img::RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file '" + path + "'");
  return img::parse_config(is);
}

void apply_env_seed(img::RunConfig& cfg) {
  if (const char* s = std::getenv("IMG_SEED")) {
    cfg.trainer.seed = std::strtoull(s, nullptr, 10);
    std::cout << "IMG_SEED override: trainer seed = " << cfg.trainer.seed << "\n";
  }
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path) {
  img::RunConfig cfg = load_config_file(spec_path);
  img::DatasetArchive archive = img::generate(cfg.dataset);
  img::save_archive(archive, out_path);
  std::cout << "wrote " << out_path << "\n"
            << "clips: " << archive.clip_count() << " ("
            << img::task_name(archive.spec.task) << ", "
            << archive.spec.num_classes() << " classes)\n"
            << "checksum: " << std::hex << img::archive_checksum(archive)
            << std::dec << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& resume_path,
              const std::vector<std::string>& overrides) {
  img::RunConfig cfg = load_config_file(config_path);
  for (const auto& o : overrides) img::apply_override(cfg, o);
  apply_env_seed(cfg);

  img::DatasetArchive data = img::load_archive(data_path);
  img::NetworkConfig net_cfg = cfg.model_for(data);
  cfg.model = net_cfg;  // echo carries the materialized widths
  const std::string echo = img::config_echo(cfg);

  fs::create_directories(out_dir);
  {
    std::ofstream os(fs::path(out_dir) / "config.echo");
    os << echo;
  }

  img::Network<float> net = img::Network<float>::make(net_cfg);
  img::TrainState st;
  if (!resume_path.empty()) {
    img::Checkpoint ck = img::read_checkpoint(resume_path);
    img::apply_checkpoint(ck, net);
    st = std::move(ck.state);
    std::cout << "resumed from " << resume_path << " at epoch " << st.epoch << "\n";
  }

  std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl",
                        resume_path.empty() ? std::ios::trunc : std::ios::app);
  const fs::path last = fs::path(out_dir) / "last.ckpt";
  const fs::path best = fs::path(out_dir) / "best.ckpt";

  double best_seen = st.best_top1;
  try {
    img::TrainResult res = img::train(
        net, data, cfg.trainer, st, &metrics,
        [&](img::Network<float>& n, const img::TrainState& s,
            const img::MetricRow& val) {
          img::save_checkpoint(last.string(), n, s, echo);
          if (val.top1 >= best_seen) {
            best_seen = val.top1;
            img::save_checkpoint(best.string(), n, s, echo);
          }
        });
    std::cout << "trained " << res.state.epoch << " epochs, best val top-1 "
              << res.state.best_top1 << "\n";
  } catch (const img::TrainAbort& abort) {
    std::ofstream os(fs::path(out_dir) / "abort.txt");
    os << "epoch " << abort.epoch << " batch " << abort.batch << "\n";
    std::cerr << "training aborted: " << abort.what() << "\n";
    return 1;
  }
  return 0;
}

int cmd_verify(const std::string& suite) {
  const auto results = img::verify_suite(suite);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[ ok ] " : "[FAIL] ") << r.name
              << ": measured=" << r.measured << " threshold=" << r.threshold
              << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "all checks passed" : "CHECKS FAILED") << " ("
            << results.size() << " checks)\n";
  return all_pass ? 0 : 1;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& data_path,
                int64_t clip_index, const std::string& out_dir) {
  img::Checkpoint ck = img::read_checkpoint(ckpt_path);
  img::RunConfig cfg = img::parse_config_text(ck.config_echo);
  img::DatasetArchive data = img::load_archive(data_path);
  if (clip_index < 0 || clip_index >= data.clip_count())
    throw std::invalid_argument("clip index " + std::to_string(clip_index) +
                                " out of range [0," +
                                std::to_string(data.clip_count()) + ")");
  img::NetworkConfig net_cfg = cfg.model_for(data);
  img::Network<float> net = img::Network<float>::make(net_cfg);
  img::apply_checkpoint(ck, net);

  img::Tensor<float> clip = data.batch({clip_index});
  img::Graph<float> g(false);
  std::vector<img::Tensor<float>> attention;
  net.forward(g, clip, false, nullptr, &attention);

  fs::create_directories(out_dir);
  {
    std::ofstream os(fs::path(out_dir) / "attention.csv");
    os << "block,t";
    for (int64_t c = 0; c < net_cfg.mid; ++c) os << ",c" << c;
    os << "\n";
    for (std::size_t b = 0; b < attention.size(); ++b) {
      const auto& fs_att = attention[b];
      for (int64_t t = 0; t < fs_att.shape[1]; ++t) {
        os << b << ',' << t;
        for (int64_t c = 0; c < fs_att.shape[2]; ++c)
          os << ',' << fs_att.at(int64_t(0), t, c, int64_t(0), int64_t(0));
        os << "\n";
      }
    }
  }
  {
    std::ofstream os(fs::path(out_dir) / "kernels.csv");
    os << "block,slice,channel,k0,k1,k2\n";
    for (std::size_t b = 0; b < net.blocks.size(); ++b) {
      if (!net.blocks[b].clim) continue;
      for (int j = 0; j < 3; ++j) {
        const auto& sk = net.blocks[b].clim->shift[j];
        if (sk.mode == img::ShiftMode::kConv1d) continue;  // no per-channel taps
        for (int64_t c = 0; c < sk.taps.shape[0]; ++c)
          os << b << ',' << j << ',' << c << ',' << sk.taps.at(c, int64_t(0))
             << ',' << sk.taps.at(c, int64_t(1)) << ','
             << sk.taps.at(c, int64_t(2)) << "\n";
      }
    }
  }
  std::cout << "wrote " << (fs::path(out_dir) / "attention.csv").string()
            << " and " << (fs::path(out_dir) / "kernels.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multigranular motion-feature network: data, training, "
               "verification and inspection"};
  app.require_subcommand(1);

  std::string spec_path, out_path;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic clip archive");
  gen->add_option("--spec", spec_path, "dataset spec file")->required();
  gen->add_option("--out", out_path, "output archive path")->required();

  std::string config_path, data_path, out_dir, resume_path;
  std::vector<std::string> overrides;
  auto* tr = app.add_subcommand("train", "train a model on an archive");
  tr->add_option("--config", config_path, "run configuration file")->required();
  tr->add_option("--data", data_path, "dataset archive")->required();
  tr->add_option("--out-dir", out_dir, "output directory")->required();
  tr->add_option("--resume", resume_path, "checkpoint to resume from");
  tr->add_option("--set", overrides, "override, e.g. trainer.epochs=5");

  std::string suite{"all"};
  auto* ver = app.add_subcommand("verify", "run a verification suite");
  ver->add_option("--suite", suite,
                  "shift-equivalence | gradients | cmem | clim | all");

  std::string ckpt_path, ins_data, ins_out;
  int64_t clip_index = 0;
  auto* ins = app.add_subcommand("inspect", "dump attention and shift kernels");
  ins->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  ins->add_option("--data", ins_data, "dataset archive")->required();
  ins->add_option("--clip-index", clip_index, "clip to inspect");
  ins->add_option("--out-dir", ins_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(spec_path, out_path);
    if (tr->parsed())
      return cmd_train(config_path, data_path, out_dir, resume_path, overrides);
    if (ver->parsed()) return cmd_verify(suite);
    if (ins->parsed()) return cmd_inspect(ckpt_path, ins_data, clip_index, ins_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
