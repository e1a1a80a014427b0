// voxworld command-line front end. Output goes to stdout; failures print a
// JSON error object on stderr and exit with status 1.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxworld/service.hpp"
#include "voxworld/voxworld.hpp"

namespace fs = std::filesystem;
using namespace voxworld;

namespace {

struct Configs {
  std::optional<FeatureConfig> features;  // set only when --config names one
  TrainConfig training;
};

// Accepts the document `config show` prints; either key may be absent.
Configs read_configs(const std::string& path) {
  Configs c;
  if (path.empty()) return c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(binio::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, e.what(), path);
  }
  if (j.contains("feature_config")) c.features = j.at("feature_config").get<FeatureConfig>();
  if (j.contains("train_config")) c.training = j.at("train_config").get<TrainConfig>();
  if (c.features) c.features->validate();
  c.training.validate();
  return c;
}

void require_same_features(const Configs& c, const Corpus& corpus, const std::string& where) {
  if (c.features && !(*c.features == corpus.config())) {
    throw Error(ErrorCode::ConfigMismatch, "--config feature settings differ from the corpus", where);
  }
}

void write_or_print(const nlohmann::json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    binio::write_text_atomic(out, j.dump());
  }
}

Scene read_scene(const std::string& path) {
  try {
    auto scene = nlohmann::json::parse(binio::read_text(path)).get<Scene>();
    scene.validate();
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, e.what(), path);
  }
}

void print_accuracy_table(const HeadSet& set) {
  std::printf("%-18s %7s %9s %9s\n", "head", "classes", "train", "test");
  for (const auto& h : set.heads) {
    std::printf("%-18s %7zu %9.4f %9.4f\n", std::string(h.head.name).c_str(), h.head.class_count,
                h.train_accuracy, h.test_accuracy);
  }
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxworld: voice-to-voice agent training toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with feature_config and/or train_config")
      ->check(CLI::ExistingFile);

  auto* config_cmd = app.add_subcommand("config", "configuration");
  config_cmd->require_subcommand(1);
  auto* show = config_cmd->add_subcommand("show", "print the effective configuration");

  std::string wav, out;
  auto* extract = app.add_subcommand("extract", "plot data (waveform, spectrogram, 53-row array) for a clip");
  extract->add_option("wav", wav)->required()->check(CLI::ExistingFile);
  extract->add_option("--out", out, "output JSON (default stdout)");

  std::string corpus_dir, head_name;
  auto* dataset = app.add_subcommand("dataset", "build and export one head's four-file bundle");
  dataset->add_option("corpus", corpus_dir)->required();
  dataset->add_option("--head", head_name)->required();
  dataset->add_option("--out", out)->required();

  std::string heads_file, datasets_dir;
  auto* train = app.add_subcommand("train", "train all seven heads");
  train->add_option("corpus", corpus_dir)->required();
  train->add_option("--out", heads_file)->required();
  train->add_option("--datasets", datasets_dir, "also export every bundle under this directory");

  std::string scene_path;
  std::optional<std::uint32_t> point;
  auto* talk = app.add_subcommand("talk", "one talking-mode turn");
  talk->add_option("heads", heads_file)->required()->check(CLI::ExistingFile);
  talk->add_option("scene", scene_path)->required()->check(CLI::ExistingFile);
  talk->add_option("wav", wav)->required()->check(CLI::ExistingFile);
  talk->add_option("--point", point, "object the player points at");
  talk->add_option("--corpus", corpus_dir, "training corpus that supplies reply clips");

  auto* eval = app.add_subcommand("eval", "test-split accuracy and confusion matrix per head");
  eval->add_option("heads", heads_file)->required()->check(CLI::ExistingFile);
  eval->add_option("corpus", corpus_dir)->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("corpus", corpus_dir, "data root (FT_DATA_DIR overrides)");
  serve->add_option("--scene", scene_path)->check(CLI::ExistingFile);
  serve->add_option("--port", port);
  serve->add_option("--host", host);

  bool extended = false;
  std::size_t reps = 5;
  std::uint64_t seed = 2024;
  auto* fixture_cmd = app.add_subcommand("fixture", "write the synthetic starter-world corpus");
  fixture_cmd->add_option("dir", corpus_dir)->required();
  fixture_cmd->add_flag("--extended", extended, "teach colour, size and yes/no chains too");
  fixture_cmd->add_option("--reps", reps, "repetitions per pattern and object");
  fixture_cmd->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfgs = read_configs(config_path);

    if (*show) {
      std::cout << nlohmann::json{{"feature_config", cfgs.features.value_or(FeatureConfig{})},
                                  {"train_config", cfgs.training}}
                       .dump(2)
                << "\n";
    } else if (*extract) {
      const auto clip = decode_wav(binio::read_file(wav), fs::path(wav).filename().string());
      write_or_print(plot_json(visualization_bundle(clip, cfgs.features.value_or(FeatureConfig{}))), out);
    } else if (*dataset) {
      const auto corpus = load_corpus(corpus_dir);
      require_same_features(cfgs, corpus, corpus_dir);
      const auto bundle = build_dataset(corpus, head_by_name(head_name));
      export_bundle(bundle, out);
      std::cout << nlohmann::json{{"head", bundle.head.name},
                                  {"width", bundle.train_data.cols()},
                                  {"train_rows", bundle.train_data.rows()},
                                  {"test_rows", bundle.test_data.rows()}}
                       .dump()
                << "\n";
    } else if (*train) {
      const auto corpus = load_corpus(corpus_dir);
      require_same_features(cfgs, corpus, corpus_dir);
      const auto run = train_all(corpus, cfgs.training);
      save_heads(run.heads, heads_file);
      if (!datasets_dir.empty()) export_all(run, datasets_dir);
      print_accuracy_table(run.heads);
    } else if (*talk) {
      const auto heads = load_heads(heads_file);
      Agent agent(read_scene(scene_path));
      Corpus corpus(cfgs.features.value_or(FeatureConfig{}));
      if (!corpus_dir.empty()) {
        corpus = load_corpus(corpus_dir);
        require_same_features(cfgs, corpus, corpus_dir);
        agent.rebuild(corpus);
      }
      auto clip = decode_wav(binio::read_file(wav), fs::path(wav).filename().string());
      std::cout << turn_json(agent.handle_turn(heads, corpus, std::move(clip), point)).dump(2) << "\n";
    } else if (*eval) {
      const auto heads = load_heads(heads_file);
      const auto corpus = load_corpus(corpus_dir);
      if (heads.feature_hash != config_hash(corpus.config())) {
        throw Error(ErrorCode::ConfigHashMismatch, "heads were trained under another feature config",
                    heads_file);
      }
      nlohmann::json report = nlohmann::json::array();
      for (const auto& spec : kHeadTable) {
        const auto* head = heads.find(spec.kind);
        if (!head) throw Error(ErrorCode::MissingHead, "heads file lacks this head", std::string(spec.name));
        const auto e = evaluate(*head, build_dataset(corpus, spec));
        nlohmann::json confusion = nlohmann::json::array();
        for (std::size_t r = 0; r < e.confusion.rows(); ++r) {
          const auto row = e.confusion.row(r);
          confusion.push_back(std::vector<std::uint32_t>(row.begin(), row.end()));
        }
        report.push_back({{"head", spec.name}, {"test_accuracy", e.accuracy}, {"confusion", confusion}});
      }
      std::cout << report.dump(2) << "\n";
    } else if (*serve) {
      if (const char* env = std::getenv("FT_DATA_DIR"); env && *env) corpus_dir = env;
      if (corpus_dir.empty()) {
        throw Error(ErrorCode::InvalidArgument, "give a corpus directory or set FT_DATA_DIR", "corpus");
      }
      std::optional<Scene> scene;
      if (!scene_path.empty()) scene = read_scene(scene_path);
      Session session(corpus_dir, {cfgs.features, cfgs.training}, scene);
      httplib::Server srv;
      bind_routes(srv, session);
      g_server = &srv;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "serving " << corpus_dir << " on http://" << host << ":" << port << "\n";
      if (!srv.listen(host, port)) {
        throw Error(ErrorCode::IoFailure, "cannot listen on " + host + ":" + std::to_string(port), "port");
      }
    } else if (*fixture_cmd) {
      fixture::FixtureOptions opt;
      opt.extended = extended;
      opt.repetitions = reps;
      opt.seed = seed;
      const auto f = fixture::make_fixture(opt, cfgs.features.value_or(FeatureConfig{}));
      const fs::path root = corpus_dir;
      save_corpus(f.corpus, root);
      binio::write_text_atomic(root / "scene.json", nlohmann::json(preliminary_world()).dump(2));
      // Fresh takes of every phrase, for trying `talk` against the trained heads.
      std::mt19937_64 rng(seed + 1);
      for (const auto& p : f.inventory) {
        for (const auto& obj : f.agent.scene().objects) {
          const auto u = fixture::synthesize(p, f.agent.scene(), obj.object_id, rng, f.corpus.config(), opt.synth);
          const auto name = "pattern" + std::to_string(p.id) + "-object" + std::to_string(obj.object_id) + ".wav";
          binio::write_file_atomic(root / "samples" / name, encode_wav_pcm16(u.clip));
        }
      }
      std::cout << nlohmann::json{{"utterances", f.corpus.records().size()},
                                  {"clips", f.corpus.clips().size()},
                                  {"root", root.string()}}
                       .dump()
                << "\n";
    }
  } catch (const Error& e) {
    std::cerr << error_json(e).dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"code", "Internal"}, {"message", e.what()}, {"detail_path", ""}}.dump()
              << "\n";
    return 1;
  }
  return 0;
}
