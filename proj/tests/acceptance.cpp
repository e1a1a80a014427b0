// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and time limits are fixed here.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "support.hpp"
#include "voxworld/fixture.hpp"
#include "voxworld/pipeline.hpp"
#include "voxworld/service.hpp"
#include "voxworld/voxworld.hpp"

#ifndef VOXWORLD_CLI
#error "VOXWORLD_CLI must name the command-line binary"
#endif

using namespace voxworld;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kDspTolerance = 1e-6;
constexpr double kGradTolerance = 1e-4;
constexpr double kStudyHeldOut = 0.90;
constexpr double kDspSeconds = 10, kShapeSeconds = 30, kGradSeconds = 5, kStudySeconds = 300,
                 kSessionSeconds = 60;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

int failures = 0;

void report(const std::string& name, Outcome o, double seconds, double limit = 0) {
  if (limit > 0) o.require(seconds < limit, "took longer than " + std::to_string(static_cast<int>(limit)) + " s");
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %8.2f s  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), seconds, o.detail.c_str());
  std::fflush(stdout);
}

template <typename Fn>
double timed(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome dsp_oracle() {
  Outcome o;
  std::mt19937_64 rng(101);
  FeatureConfig cfg;
  const FeatureExtractor fx(cfg);
  double worst_spec = 0, worst_feat = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(1024);
    for (auto& v : x) v = 2.0 * unit_uniform(rng) - 1.0;
    const auto got = spectrum(x);
    const auto want = oracle::naive_magnitude(x);
    double peak = 0;
    for (double v : want) peak = std::max(peak, v);
    for (std::size_t j = 0; j < want.size(); ++j) {
      worst_spec = std::max(worst_spec, oracle::relative_error(got[j], want[j], std::max(want[j], 1e-9 * peak)));
    }
    const auto f_got = fx.frame_features(got);
    const auto f_want = oracle::features(want, 1024, 16000, 0, 8000, cfg.log_floor);
    double scale = 0;
    for (double v : f_want) scale = std::max(scale, std::abs(v));
    for (std::size_t r = 0; r < f_want.size(); ++r) {
      worst_feat = std::max(worst_feat, oracle::relative_error(f_got[r], f_want[r], scale));
    }
  }
  o.require(worst_spec <= kDspTolerance, "spectrum error " + fmt(worst_spec));
  o.require(worst_feat <= kDspTolerance, "feature error " + fmt(worst_feat));
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("max rel err spectrum ") + fmt(worst_spec) +
              ", features " + fmt(worst_feat);
  return o;
}

Outcome shape_law() {
  Outcome o;
  std::mt19937_64 rng(202);
  std::size_t bad = 0;
  for (int i = 0; i < 1000; ++i) {
    FeatureConfig cfg;
    cfg.frame_size = std::size_t{1} << (6 + rng() % 7);  // 64 .. 4096
    cfg.hop_size = 1 + rng() % cfg.frame_size;
    cfg.grid_frames = 1 + rng() % 128;
    const std::size_t len = 1 + rng() % 24000;
    AudioClip clip{std::vector<float>(len), 16000, ""};
    for (auto& v : clip.samples) v = static_cast<float>(unit_uniform(rng) - 0.5);
    const auto m = extract_features(clip, cfg);
    const long long diff = static_cast<long long>(len) - static_cast<long long>(cfg.frame_size);
    const long long hop = static_cast<long long>(cfg.hop_size);
    const long long ceil_div = diff > 0 ? (diff + hop - 1) / hop : -((-diff) / hop);
    const auto t_formula = static_cast<std::size_t>(std::max(1LL, ceil_div + 1));
    const auto g = fit_to_grid(normalize(m), cfg);
    if (m.values.rows() != 53 || m.frames() != t_formula ||
        m.frames() != oracle::enumerate_frames(len, cfg.frame_size, cfg.hop_size) || g.values.rows() != 53 ||
        g.values.cols() != cfg.grid_frames) {
      ++bad;
    }
  }
  o.require(bad == 0, std::to_string(bad) + " of 1000 triples broke the law");
  if (o.pass) o.detail = "1000 triples";
  return o;
}

Outcome gradient_check() {
  Outcome o;
  std::mt19937_64 rng(303);
  double worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    MlpParams<double> p(4, 3, 2);
    p.initialize(rng);
    for (auto& v : p.b1) v = 0.1;
    std::vector<std::vector<double>> xs(6, std::vector<double>(4));
    for (auto& x : xs) {
      for (auto& v : x) v = 2.0 * unit_uniform(rng) - 1.0;
    }
    std::vector<std::uint32_t> labels;
    for (std::size_t i = 0; i < xs.size(); ++i) labels.push_back(static_cast<std::uint32_t>(rng() % 2));
    const std::vector<std::span<const double>> rows(xs.begin(), xs.end());
    auto loss = [&](const MlpParams<double>& q) {
      MlpParams<double> scratch(4, 3, 2);
      return mlp_backprop_batch<double>(q, rows, labels, scratch) / static_cast<double>(rows.size());
    };
    MlpParams<double> grad(4, 3, 2);
    mlp_backprop_batch<double>(p, rows, labels, grad);
    std::vector<std::vector<double>*> params = {&p.w1, &p.b1, &p.w2, &p.b2};
    std::vector<std::vector<double>*> grads = {&grad.w1, &grad.b1, &grad.w2, &grad.b2};
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t i = 0; i < params[t]->size(); ++i) {
        const double saved = (*params[t])[i];
        (*params[t])[i] = saved + 1e-6;
        const double up = loss(p);
        (*params[t])[i] = saved - 1e-6;
        const double down = loss(p);
        (*params[t])[i] = saved;
        const double numeric = (up - down) / 2e-6;
        const double analytic = (*grads[t])[i];
        const double scale = std::max({1e-3, std::abs(numeric), std::abs(analytic)});
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
      }
    }
  }
  o.require(worst <= kGradTolerance, "gradient error " + fmt(worst));
  if (o.pass) o.detail = "max rel err " + fmt(worst) + " over 5 networks 4-3-2";
  return o;
}

// ---------------------------------------------------------------------------

Outcome study(const fixture::Fixture& f, const TrainingRun& run) {
  Outcome o;
  std::ostringstream table;
  for (const auto& h : run.heads.heads) {
    o.require(h.train_accuracy == 1.0, std::string(h.head.name) + " train " + fmt(h.train_accuracy));
    if (h.head.kind == HeadKind::Object || h.head.kind == HeadKind::PhrasePattern) {
      o.require(h.test_accuracy >= kStudyHeldOut, std::string(h.head.name) + " test " + fmt(h.test_accuracy));
    }
    table << h.head.name << " " << fmt(h.train_accuracy) << "/" << fmt(h.test_accuracy) << " ";
  }
  o.require(f.corpus.records().size() == 40, "fixture should hold 2 objects x 4 patterns x 5 reps");
  if (o.pass) o.detail = table.str();
  return o;
}

std::string first_clip(const Corpus& c, std::uint32_t pattern, std::uint32_t object) {
  for (const auto& r : c.records()) {
    if (r.active() && !r.source_turn && r.markers.phrase_pattern_id == pattern && r.markers.object_id == object) {
      return r.markers.clip_id;
    }
  }
  return "<none>";
}

/// Scripted talking-mode session over the extended fixture. Every turn is
/// checked against the answer the dispatch table prescribes, worked out from
/// the corpus and scene rather than from the agent's registry.
Outcome capability_matrix(const fixture::Fixture& f, const HeadSet& heads, double& seconds) {
  using namespace fixture::patterns;
  Outcome o;
  Corpus corpus = f.corpus;
  Agent agent = f.agent;
  std::mt19937_64 rng(909);
  std::set<std::string> exercised;

  struct Expect {
    std::string capability;
    std::uint32_t pattern;
    std::uint32_t audio_object;
    std::optional<std::uint32_t> pointed;
    ChainRole role;
    ActionKind kind;
    std::optional<std::string> clip;
    std::optional<std::uint32_t> object;
  };
  std::vector<Expect> script;
  for (const auto& obj : agent.scene().objects) {
    const auto id = obj.object_id;
    const auto other = id == 0 ? 1u : 0u;
    const bool green = obj.color == "green";
    script.push_back({"name", kWhat, other, id, ChainRole::WhatQuestion, ActionKind::Reply,
                      first_clip(corpus, kName, id), std::nullopt});
    script.push_back({"find", kWhere, id, std::nullopt, ChainRole::WhereQuestion, ActionKind::ReplyAndPoint,
                      first_clip(corpus, kHere, id), id});
    script.push_back({"question-answer", kIsItGreen, other, id, ChainRole::YesNoQuestion, ActionKind::Reply,
                      first_clip(corpus, green ? kYes : kNo, id), std::nullopt});
    script.push_back({"property", kColorQuestion, other, id, ChainRole::PropertyQuestion,
                      ActionKind::ReplyAndPoint, first_clip(corpus, kColorStatement, id), id});
    script.push_back({"property", kSizeQuestion, other, id, ChainRole::PropertyQuestion,
                      ActionKind::ReplyAndPoint, first_clip(corpus, kSizeStatement, id), id});
    script.push_back({"command", kFind, id, std::nullopt, ChainRole::Command, ActionKind::NavigateTo,
                      std::nullopt, id});
  }

  std::vector<fixture::Utterance> takes;
  for (const auto& e : script) {
    takes.push_back(fixture::synthesize(fixture::find_pattern(f.inventory, e.pattern), agent.scene(),
                                        e.audio_object, rng, corpus.config()));
  }

  std::size_t ok = 0;
  seconds = timed([&] {
    for (std::size_t i = 0; i < script.size(); ++i) {
      const auto& e = script[i];
      const Scene before = agent.scene();
      const auto registry = agent.registry();
      const auto turn = agent.handle_turn(heads, corpus, takes[i].clip, e.pointed);
      const auto row = dispatch(turn.prediction, e.pointed, before, registry, agent.clarify_threshold());
      const std::string tag = e.capability + " (pattern " + std::to_string(e.pattern) + ", object " +
                              std::to_string(e.pointed.value_or(e.audio_object)) + ")";
      bool good = true;
      auto check = [&](bool cond, const std::string& what) {
        if (!cond) {
          good = false;
          o.require(false, tag + ": " + what);
        }
      };
      check(turn.resolved_tags.phrase_pattern_id == e.pattern, "pattern");
      check(turn.resolved_tags.role == e.role, "role");
      check(turn.action.kind == e.kind, "action " + std::string(to_string(turn.action.kind)));
      check(turn.action.clip_id == e.clip, "clip " + turn.action.clip_id.value_or("none"));
      check(turn.action.object_id == e.object, "object");
      check(row.action.kind == turn.action.kind && row.action.clip_id == turn.action.clip_id &&
                row.action.object_id == turn.action.object_id,
            "turn disagrees with the dispatch table");
      if (e.kind == ActionKind::NavigateTo) {
        check(!turn.action.path.empty() && turn.action.path.back() == before.at(*e.object).position,
              "path does not end on the object");
      }
      const auto truth = fixture::find_pattern(f.inventory, e.pattern).intonation;
      check(turn.prediction.argmax(HeadKind::PhraseIntonation) == static_cast<std::uint32_t>(truth),
            "phrase intonation");
      if (good) {
        ++ok;
        exercised.insert(e.capability);
      }
    }
  });
  if (ok == script.size()) exercised.insert("intonation");
  o.require(exercised.size() == 6, std::to_string(exercised.size()) + " of 6 capabilities shown");
  if (o.pass) o.detail = std::to_string(ok) + "/" + std::to_string(script.size()) + " turns, 6 capabilities";
  return o;
}

// ---------------------------------------------------------------------------

std::map<std::string, binio::Bytes> tree_bytes(const fs::path& root) {
  std::map<std::string, binio::Bytes> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = binio::read_file(e.path());
  }
  return out;
}

int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

pid_t spawn_server(const fs::path& root, int port) {
  const pid_t pid = ::fork();
  if (pid == 0) {
    const std::string dir = root.string(), p = std::to_string(port);
    const int null = ::open("/dev/null", O_WRONLY);
    ::dup2(null, STDERR_FILENO);
    ::execl(VOXWORLD_CLI, "voxworld", "serve", dir.c_str(), "--port", p.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  return pid;
}

bool wait_ready(httplib::Client& c) {
  for (int i = 0; i < 400; ++i) {
    if (auto r = c.Get("/config"); r && r->status == 200) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  return false;
}

Outcome persistence(const fixture::Fixture& f, const TrainingRun& run, const fs::path& scratch) {
  Outcome o;
  // Corpus: save, load, save again; both trees must match byte for byte.
  const auto a = scratch / "corpus-a", b = scratch / "corpus-b";
  save_corpus(f.corpus, a);
  const auto loaded = load_corpus(a);
  o.require(loaded == f.corpus, "corpus changed across save/load");
  save_corpus(loaded, b);
  o.require(tree_bytes(a) == tree_bytes(b), "corpus files differ after a round trip");

  // Bundles: exactly four files per head; import then re-export is bit-exact.
  const auto d1 = scratch / "datasets-a", d2 = scratch / "datasets-b";
  export_all(run, d1);
  for (const auto& bundle : run.bundles) {
    const auto dir = d1 / std::string(bundle.head.name);
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
    o.require(files == 4, std::string(bundle.head.name) + " has " + std::to_string(files) + " files");
    const auto back = import_bundle(dir, bundle.head);
    o.require(back == bundle, std::string(bundle.head.name) + " bundle changed across export/import");
    export_bundle(back, d2 / std::string(bundle.head.name));
  }
  o.require(tree_bytes(d1) == tree_bytes(d2), "bundle files differ after a round trip");

  // Heads: decode(encode(x)) == x and the bytes are stable.
  const auto heads_file = scratch / "heads.ftmh";
  save_heads(run.heads, heads_file);
  const auto heads_back = load_heads(heads_file);
  o.require(heads_back == run.heads, "heads changed across save/load");
  o.require(encode_heads(heads_back) == binio::read_file(heads_file), "head bytes differ after a round trip");

  // Service: SIGKILL after acknowledged writes, restart, everything is there.
  const auto root = scratch / "service";
  fs::copy(a, root, fs::copy_options::recursive);
  fs::copy_file(heads_file, root / "heads.ftmh");
  const int port = free_port();
  pid_t pid = spawn_server(root, port);
  httplib::Client http("127.0.0.1", port);
  http.set_read_timeout(60, 0);
  o.require(wait_ready(http), "service did not start");
  std::mt19937_64 rng(77);
  const auto take = fixture::synthesize(fixture::find_pattern(f.inventory, fixture::patterns::kFind), f.agent.scene(),
                                        1, rng, f.corpus.config());
  const auto wav = encode_wav_f32(take.clip);
  const std::string wav_body(wav.begin(), wav.end());
  std::string clip_id, turn_clip;
  if (auto r = http.Post("/recordings", wav_body, "audio/wav"); r && r->status == 200) {
    clip_id = json::parse(r->body).at("clip_id");
  }
  json markers = take.markers;
  markers.erase("clip_id");
  auto r = http.Post("/utterances", json{{"clip_id", clip_id}, {"markers", markers}}.dump(), "application/json");
  o.require(r && r->status == 200, "utterance not accepted");
  r = http.Post("/talk", wav_body, "audio/wav");
  o.require(r && r->status == 200, "talk failed");
  if (r && r->status == 200) turn_clip = json::parse(r->body).at("message").at("clip_id");
  r = http.Post("/corrections", json{{"turn_id", 1}, {"markers", markers}}.dump(), "application/json");
  o.require(r && r->status == 200, "correction not accepted");
  const auto before_utts = http.Get("/utterances");
  const auto before_world = http.Get("/world");
  ::kill(pid, SIGKILL);
  ::waitpid(pid, nullptr, 0);

  pid = spawn_server(root, port);
  o.require(wait_ready(http), "service did not restart");
  const auto after_utts = http.Get("/utterances");
  o.require(before_utts && after_utts && before_utts->body == after_utts->body, "utterances differ after restart");
  const auto utts = after_utts ? json::parse(after_utts->body) : json::array();
  o.require(utts.size() == 42 && utts.back().at("pending") == true, "pending correction lost");
  const auto after_world = http.Get("/world");
  o.require(before_world && after_world && before_world->body == after_world->body, "scene differs after restart");
  const auto turns = http.Get("/turns");
  o.require(turns && json::parse(turns->body).size() == 1, "turn log lost");
  const auto clip = http.Get("/clips/" + clip_id);
  o.require(clip && clip->body == wav_body, "recorded clip bytes differ");
  o.require(http.Get("/clips/" + turn_clip)->status == 200, "talk clip lost");
  r = http.Post("/talk", wav_body, "audio/wav");
  o.require(r && r->status == 200 && json::parse(r->body).at("turn_id") == 2, "heads or turn counter lost");
  ::kill(pid, SIGTERM);
  ::waitpid(pid, nullptr, 0);
  if (o.pass) o.detail = "corpus, 7 bundles x 4 files, heads, service restart after SIGKILL";
  return o;
}

Outcome determinism(const TrainingRun& first) {
  Outcome o;
  const auto again = fixture::make_fixture();
  const auto run = train_all(again.corpus, TrainConfig{});
  o.require(encode_heads(run.heads) == encode_heads(first.heads), "head bytes differ between runs");
  o.require(accuracy_table(run.heads) == accuracy_table(first.heads), "accuracy tables differ between runs");
  if (o.pass) o.detail = "heads bit-identical, tables identical";
  return o;
}

}  // namespace

int main() {
  testutil::TempDir scratch("acceptance");

  Outcome o;
  double t = timed([&] { o = dsp_oracle(); });
  report("dsp-oracle", o, t, kDspSeconds);

  t = timed([&] { o = shape_law(); });
  report("feature-shape-law", o, t, kShapeSeconds);

  t = timed([&] { o = gradient_check(); });
  report("gradient-check", o, t, kGradSeconds);

  std::optional<fixture::Fixture> base;
  std::optional<TrainingRun> base_run;
  t = timed([&] {
    base = fixture::make_fixture();
    base_run = train_all(base->corpus, TrainConfig{});
    o = study(*base, *base_run);
  });
  report("preliminary-study", o, t, kStudySeconds);

  double session_seconds = 0;
  t = timed([&] {
    fixture::FixtureOptions opt;
    opt.extended = true;
    const auto ext = fixture::make_fixture(opt);
    const auto run = train_all(ext.corpus, TrainConfig{});
    o = capability_matrix(ext, run.heads, session_seconds);
  });
  o.detail += " (session " + fmt(session_seconds) + " s, with training " + fmt(t) + " s)";
  report("capability-matrix", o, session_seconds, kSessionSeconds);

  t = timed([&] {
    try {
      o = persistence(*base, *base_run, scratch.path());
    } catch (const std::exception& e) {
      o = Outcome{false, e.what()};
    }
  });
  report("persistence", o, t);

  t = timed([&] { o = determinism(*base_run); });
  report("determinism", o, t);

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
