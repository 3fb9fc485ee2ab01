// maskcert command line: plan, certify, evaluate, fuzz, plus init/make-data
// helpers for building toy checkpoints and datasets.
//
// Exit codes: 0 ok, 1 usage or I/O, 2 uncertifiable geometry, 3 soundness
// violation found by fuzz.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maskcert/adversary.hpp"
#include "maskcert/certifier.hpp"
#include "maskcert/errors.hpp"
#include "maskcert/image_io.hpp"
#include "maskcert/mask_plan.hpp"
#include "maskcert/model_io.hpp"
#include "maskcert/random.hpp"
#include "maskcert/report.hpp"
#include "maskcert/toy.hpp"

namespace fs = std::filesystem;
using namespace maskcert;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitGeometry = 2;
constexpr int kExitViolation = 3;

constexpr std::uint64_t kFuzzTag = 0x66757a7a;  // "fuzz"

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdvArgs {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t size = 0;

  void add_to(CLI::App& cmd) {
    auto* w = cmd.add_option("--adv-width", width, "Adversarial patch width in pixels")
                  ->check(CLI::PositiveNumber);
    auto* h = cmd.add_option("--adv-height", height, "Adversarial patch height in pixels")
                  ->check(CLI::PositiveNumber);
    cmd.add_option("--adv-size", size, "Square patch shorthand (sets width and height)")
        ->check(CLI::PositiveNumber)
        ->excludes(w)
        ->excludes(h);
  }

  AdversaryGeometry resolve() const {
    if (size != 0) return {size, size};
    if (width == 0 || height == 0) {
      throw UsageError("adversary size required: --adv-size, or both --adv-width and --adv-height");
    }
    return {width, height};
  }
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ImageIoError("cannot open '" + path.string() + "' for writing");
  return f;
}

void emit(const Json& doc, const std::string& path) {
  if (path.empty()) {
    std::cout << doc.dump(2) << "\n";
    return;
  }
  auto f = open_out(path);
  f << doc.dump(2) << "\n";
}

// Manifest path as written relative to the manifest's own directory.
std::string display_path(const fs::path& entry, const fs::path& manifest) {
  const fs::path rel = entry.lexically_relative(manifest.parent_path());
  return rel.empty() ? entry.generic_string() : rel.generic_string();
}

std::vector<LabeledImage> load_dataset(const fs::path& manifest, const ModelConfig& config,
                                       std::vector<std::string>* inputs = nullptr) {
  std::vector<LabeledImage> data;
  for (const ManifestEntry& e : read_manifest(manifest)) {
    if (e.label >= config.num_classes) {
      throw UsageError("manifest '" + manifest.string() + "': label " + std::to_string(e.label) +
                       " out of range for " + std::to_string(config.num_classes) + " classes");
    }
    const std::string id = display_path(e.path, manifest);
    data.push_back({id, read_image(e.path, config), e.label});
    if (inputs) inputs->push_back(e.path.string());
  }
  if (data.empty()) throw UsageError("manifest '" + manifest.string() + "' lists no images");
  return data;
}

// ---- plan ------------------------------------------------------------------

struct PlanArgs {
  std::size_t image_size = 0, image_width = 0, image_height = 0, patch_size = 0;
  AdvArgs adv;
  bool json = false;
};

int run_plan(const PlanArgs& a) {
  GridGeometry g;
  g.image_width = a.image_width ? a.image_width : a.image_size;
  g.image_height = a.image_height ? a.image_height : a.image_size;
  g.patch_size = a.patch_size;
  if (g.image_width == 0 || g.image_height == 0) {
    throw UsageError("image size required: --image-size, or --image-width and --image-height");
  }
  const MaskPlan plan = build_plan(g, a.adv.resolve());
  if (a.json) {
    std::cout << plan_to_json(plan).dump(2) << "\n";
  } else {
    std::cout << "grid " << plan.grid_width << "x" << plan.grid_height << ", mask extent "
              << plan.extent.cols << "x" << plan.extent.rows << ", k=" << plan.k() << "\n";
  }
  return kExitOk;
}

// ---- certify -----------------------------------------------------------------

struct CertifyArgs {
  std::string weights, input, out;
  AdvArgs adv;
  bool raw = false;
  std::size_t batch = 0;
};

int run_certify(const CertifyArgs& a) {
  const LoadedModel loaded = load_weights(a.weights);
  const VitModel model(loaded.config, loaded.weights);
  const Certifier certifier(model, build_plan(model.config(), a.adv.resolve()), {a.batch});
  const ModelConfig& cfg = model.config();

  auto certify_one = [&](const fs::path& path, const std::string& name) {
    const Image image = a.raw ? read_raw(path, cfg.image_width, cfg.image_height, cfg.channels)
                              : read_image(path, cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const CertifiedOutput out = certifier.certify(image);
    Json j{{"input", name}};
    j.update(certified_to_json(out));
    j["wall_ms"] = ms_since(t0);
    return j;
  };

  const fs::path input(a.input);
  if (!fs::is_directory(input)) {
    if (!fs::exists(input)) throw ImageIoError("input '" + a.input + "' does not exist");
    emit(certify_one(input, input.generic_string()), a.out);
    return kExitOk;
  }

  std::vector<fs::path> files;
  if (a.raw) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".f32" || ext == ".raw" || ext == ".bin")) {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    files = list_images(input);
  }
  if (files.empty()) throw ImageIoError("no images found in '" + a.input + "'");

  std::optional<std::ofstream> file;
  if (!a.out.empty()) file = open_out(a.out);
  std::ostream& os = file ? *file : std::cout;
  for (const fs::path& f : files) os << certify_one(f, f.filename().generic_string()).dump() << "\n";
  std::cerr << "certified " << files.size() << " images, k=" << certifier.plan().k() << "\n";
  return kExitOk;
}

// ---- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
  std::string weights, manifest, out, per_sample, csv;
  AdvArgs adv;
  std::size_t batch = 0;
};

int run_evaluate(const EvaluateArgs& a) {
  const LoadedModel loaded = load_weights(a.weights);
  const VitModel model(loaded.config, loaded.weights);
  const Certifier certifier(model, build_plan(model.config(), a.adv.resolve()), {a.batch});
  const std::vector<LabeledImage> data = load_dataset(a.manifest, model.config());

  std::optional<std::ofstream> jsonl, csv;
  if (!a.per_sample.empty()) jsonl = open_out(a.per_sample);
  if (!a.csv.empty()) {
    csv = open_out(a.csv);
    *csv << kCsvHeader << "\n";
  }
  const auto t0 = std::chrono::steady_clock::now();
  const EvalMetrics metrics =
      evaluate(certifier, data, [&](std::size_t, const LabeledImage& s, const CertifiedOutput& out) {
        if (jsonl) {
          Json j{{"id", s.id}, {"label", s.label}};
          j.update(certified_to_json(out));
          *jsonl << j.dump() << "\n";
        }
        if (csv) *csv << csv_row(s.id, s.label, out) << "\n";
      });
  Json doc = metrics_to_json(metrics);
  doc["k"] = certifier.plan().k();
  doc["wall_ms"] = ms_since(t0);
  emit(doc, a.out);
  return kExitOk;
}

// ---- fuzz --------------------------------------------------------------------

struct FuzzArgs {
  std::string weights, manifest, out, bundle_dir, mode = "random";
  AdvArgs adv;
  std::size_t trials = 100;
  std::size_t steps = 100;
  std::uint64_t seed = 42;
  bool verbose = false;
  bool disable_masking = false;
};

void write_bundle(const fs::path& dir, const std::string& clean_path, std::size_t index,
                  const LabeledImage& sample, const AttackReport& report,
                  const CertifiedOutput& clean_out) {
  const Counterexample& cx = *report.first_violation;
  fs::create_directories(dir);
  write_raw(sample.image, dir / "clean.f32");
  write_raw(cx.placement.content, dir / "content.f32");
  write_raw(cx.adversarial, dir / "adversarial.f32");
  const auto& s = cx.placement.content.shape();
  Json j{{"clean_image", clean_path},
         {"image_index", index},
         {"label", sample.label},
         {"mode", report.mode},
         {"seed", report.seed},
         {"trial", cx.trial},
         {"placement", placement_to_json(cx.placement.rect)},
         {"content", "content.f32"},
         {"content_shape", {s[0], s[1], s[2]}},
         {"clean", "clean.f32"},
         {"adversarial", "adversarial.f32"},
         {"clean_output", certified_to_json(clean_out)},
         {"adversarial_output", certified_to_json(cx.adversarial_output)}};
  auto f = open_out(dir / "counterexample.json");
  f << j.dump(2) << "\n";
}

int run_fuzz(const FuzzArgs& a) {
  const LoadedModel loaded = load_weights(a.weights);
  VitModel model(loaded.config, loaded.weights);
  if (a.disable_masking) model.set_masking_mode(MaskingMode::kIgnoreMask);
  const AdversaryGeometry adv = a.adv.resolve();
  const Certifier certifier(model, build_plan(model.config(), adv));
  std::vector<std::string> inputs;
  const std::vector<LabeledImage> data = load_dataset(a.manifest, model.config(), &inputs);
  std::vector<Image> donors;
  for (const LabeledImage& s : data) donors.push_back(s.image);

  const auto t0 = std::chrono::steady_clock::now();
  Json images = Json::array();
  Json totals{{"trials", 0}, {"flipped", 0}, {"detected", 0}, {"flipped_detected", 0},
              {"soundness_checks", 0}, {"violations", 0}};
  bool bundled = false;
  fs::path bundle_dir = a.bundle_dir;
  if (bundle_dir.empty()) {
    bundle_dir = (a.out.empty() ? fs::path(".") : fs::path(a.out).parent_path()) / "counterexample";
  }

  // The trial budget is split round-robin over the dataset.
  const std::size_t n = data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t budget = a.trials / n + (i < a.trials % n ? 1 : 0);
    if (budget == 0) continue;
    const std::uint64_t seed = Rng{a.seed, kFuzzTag, i}.next();
    AttackReport report;
    if (a.mode == "random") {
      RandomAttackOptions o;
      o.trials = budget;
      o.seed = seed;
      o.keep_log = a.verbose;
      o.donors = donors;
      report = random_attack(certifier, data[i].image, adv, o);
    } else {
      GreedyAttackOptions o;
      o.runs = budget;
      o.steps = a.steps;
      o.seed = seed;
      o.keep_log = a.verbose;
      report = greedy_attack(certifier, data[i].image, adv, o);
    }
    Json entry{{"input", data[i].id}, {"label", data[i].label}};
    entry.update(attack_to_json(report, a.verbose));
    images.push_back(std::move(entry));
    totals["trials"] = totals["trials"].get<std::size_t>() + report.trials;
    totals["flipped"] = totals["flipped"].get<std::size_t>() + report.flipped;
    totals["detected"] = totals["detected"].get<std::size_t>() + report.detected;
    totals["flipped_detected"] = totals["flipped_detected"].get<std::size_t>() + report.flipped_detected;
    totals["soundness_checks"] = totals["soundness_checks"].get<std::size_t>() + report.soundness_checks;
    totals["violations"] = totals["violations"].get<std::size_t>() + report.violations;
    if (report.first_violation && !bundled) {
      write_bundle(bundle_dir, inputs[i], i, data[i], report, certifier.certify(data[i].image));
      bundled = true;
    }
  }

  Json doc{{"mode", a.mode},
           {"seed", a.seed},
           {"trials", a.trials},
           {"adversary", {{"width", adv.width}, {"height", adv.height}}},
           {"k", certifier.plan().k()},
           {"masking", a.disable_masking ? "disabled" : "key_exclusion"}};
  if (a.mode == "greedy") doc["steps"] = a.steps;
  doc["images"] = std::move(images);
  doc["totals"] = std::move(totals);
  doc["wall_ms"] = ms_since(t0);
  emit(doc, a.out);

  const auto violations = doc["totals"]["violations"].get<std::size_t>();
  if (violations > 0) {
    std::cerr << "soundness violation: " << violations
              << " verified prediction(s) changed; counterexample written to "
              << bundle_dir.string() << "\n";
    return kExitViolation;
  }
  return kExitOk;
}

// ---- init / make-data ----------------------------------------------------------

struct InitArgs {
  std::string out, toy = "random";
  std::uint64_t seed = 0;
  std::size_t image_size = 0, patch_size = 0, embed_dim = 0, layers = 0, heads = 0, mlp_dim = 0,
              classes = 0;
};

ModelConfig config_from_flags(const InitArgs& a, std::size_t default_classes) {
  ModelConfig c = toy_config(a.classes ? a.classes : default_classes);
  if (a.image_size) c.image_width = c.image_height = a.image_size;
  if (a.patch_size) c.patch_size = a.patch_size;
  if (a.embed_dim) c.embed_dim = a.embed_dim;
  if (a.layers) c.num_layers = a.layers;
  if (a.heads) c.num_heads = a.heads;
  if (a.mlp_dim) c.mlp_dim = a.mlp_dim;
  return c;
}

int run_init(const InitArgs& a) {
  const bool brightness = a.toy == "brightness";
  const ModelConfig config = config_from_flags(a, brightness ? 2 : 10);
  const WeightStore weights =
      brightness ? brightness_vote_weights(config) : random_init(config, a.seed);
  save_weights(config, weights, a.out);
  std::cerr << "wrote " << a.toy << " model (" << config.image_width << "x" << config.image_height
            << ", P=" << config.patch_size << ", " << config.num_classes << " classes) to " << a.out
            << "\n";
  return kExitOk;
}

struct MakeDataArgs {
  std::string out_dir, weights, kind = "brightness", format = "f32";
  std::size_t count = 20;
  std::uint64_t seed = 0;
};

int run_make_data(const MakeDataArgs& a) {
  const ModelConfig config = a.weights.empty() ? toy_config(a.kind == "brightness" ? 2 : 10)
                                               : load_weights(a.weights).config;
  const auto data = a.kind == "brightness" ? brightness_images(config, a.count, a.seed)
                                           : noise_images(config, a.count, a.seed);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  auto manifest = open_out(dir / "manifest.csv");
  manifest << "path,label\n";
  char name[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::snprintf(name, sizeof(name), "img-%03zu.%s", i, a.format.c_str());
    if (a.format == "ppm") {
      write_ppm(data[i].image, dir / name);
    } else {
      write_raw(data[i].image, dir / name);
    }
    manifest << name << "," << data[i].label << "\n";
  }
  std::cerr << "wrote " << data.size() << " images and manifest.csv to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskcert: certified detection of adversarial patches for ViT classifiers"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: OpenMP runtime)")
      ->envname("MASKCERT_THREADS")
      ->check(CLI::PositiveNumber);

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Print the mask plan for a geometry");
  auto* isz = plan_cmd->add_option("--image-size", plan.image_size, "Square image side in pixels")
                  ->check(CLI::PositiveNumber);
  plan_cmd->add_option("--image-width", plan.image_width)->check(CLI::PositiveNumber)->excludes(isz);
  plan_cmd->add_option("--image-height", plan.image_height)->check(CLI::PositiveNumber)->excludes(isz);
  plan_cmd->add_option("--patch-size", plan.patch_size, "ViT patch size")
      ->required()
      ->check(CLI::PositiveNumber);
  plan.adv.add_to(*plan_cmd);
  plan_cmd->add_flag("--json", plan.json, "Print the full plan as JSON");

  CertifyArgs cert;
  auto* cert_cmd = app.add_subcommand("certify", "Certify one image or a directory of images");
  cert_cmd->add_option("--weights", cert.weights, "PVWT checkpoint")->required();
  cert_cmd->add_option("--input", cert.input, "Image file or directory")->required();
  cert_cmd->add_flag("--raw", cert.raw, "Treat inputs as raw float32 [H,W,C] tensors");
  cert_cmd->add_option("--out", cert.out, "Output path (default stdout)");
  cert_cmd->add_option("--batch", cert.batch, "Masked passes per parallel batch (0 = all)");
  cert.adv.add_to(*cert_cmd);

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Certify a labelled dataset and report metrics");
  ev_cmd->add_option("--weights", ev.weights, "PVWT checkpoint")->required();
  ev_cmd->add_option("--manifest", ev.manifest, "CSV (path,label) or JSON manifest")->required();
  ev_cmd->add_option("--out", ev.out, "Metrics JSON path (default stdout)");
  ev_cmd->add_option("--per-sample", ev.per_sample, "Per-sample JSONL output");
  ev_cmd->add_option("--csv", ev.csv, "Per-sample CSV output");
  ev_cmd->add_option("--batch", ev.batch, "Masked passes per parallel batch (0 = all)");
  ev.adv.add_to(*ev_cmd);

  FuzzArgs fz;
  auto* fz_cmd = app.add_subcommand("fuzz", "Attack certified inputs and check soundness");
  fz_cmd->add_option("--weights", fz.weights, "PVWT checkpoint")->required();
  fz_cmd->add_option("--manifest", fz.manifest, "CSV (path,label) or JSON manifest")->required();
  fz_cmd->add_option("--trials", fz.trials, "Total trials (random) or runs (greedy)")
      ->check(CLI::PositiveNumber);
  fz_cmd->add_option("--seed", fz.seed, "Seed for all attack randomness");
  fz_cmd->add_option("--mode", fz.mode)->check(CLI::IsMember({"random", "greedy"}));
  fz_cmd->add_option("--steps", fz.steps, "Coordinate steps per greedy run");
  fz_cmd->add_option("--out", fz.out, "Report JSON path (default stdout)");
  fz_cmd->add_option("--bundle-dir", fz.bundle_dir, "Where to write a counterexample bundle");
  fz_cmd->add_flag("--verbose", fz.verbose, "Include per-trial logs");
  // Test-only fault injection: runs every masked pass without its mask.
  fz_cmd->add_flag("--unsafe-disable-masking", fz.disable_masking)->group("");
  fz.adv.add_to(*fz_cmd);

  InitArgs in;
  auto* in_cmd = app.add_subcommand("init", "Write a toy checkpoint");
  in_cmd->add_option("--out", in.out, "PVWT output path")->required();
  in_cmd->add_option("--toy", in.toy, "random | brightness")
      ->check(CLI::IsMember({"random", "brightness"}));
  in_cmd->add_option("--seed", in.seed, "Seed for random weights");
  in_cmd->add_option("--image-size", in.image_size);
  in_cmd->add_option("--patch-size", in.patch_size);
  in_cmd->add_option("--embed-dim", in.embed_dim);
  in_cmd->add_option("--layers", in.layers);
  in_cmd->add_option("--heads", in.heads);
  in_cmd->add_option("--mlp-dim", in.mlp_dim);
  in_cmd->add_option("--classes", in.classes);

  MakeDataArgs md;
  auto* md_cmd = app.add_subcommand("make-data", "Write a toy dataset and manifest.csv");
  md_cmd->add_option("--out-dir", md.out_dir)->required();
  md_cmd->add_option("--weights", md.weights, "Take image geometry from this checkpoint");
  md_cmd->add_option("--kind", md.kind)->check(CLI::IsMember({"brightness", "noise"}));
  md_cmd->add_option("--format", md.format)->check(CLI::IsMember({"f32", "ppm"}));
  md_cmd->add_option("--count", md.count)->check(CLI::PositiveNumber);
  md_cmd->add_option("--seed", md.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (threads > 0) omp_set_num_threads(static_cast<int>(threads));

  try {
    if (*plan_cmd) return run_plan(plan);
    if (*cert_cmd) return run_certify(cert);
    if (*ev_cmd) return run_evaluate(ev);
    if (*fz_cmd) return run_fuzz(fz);
    if (*in_cmd) return run_init(in);
    if (*md_cmd) return run_make_data(md);
  } catch (const GeometryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitGeometry;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
