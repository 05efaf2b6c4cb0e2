#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "splitsr/service.hpp"
#include "splitsr/splitsr.hpp"

namespace fs = std::filesystem;
using namespace splitsr;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

NetworkConfig load_config(const std::string& config_path, const std::string& preset) {
  if (!config_path.empty()) return NetworkConfig::parse(read_file(config_path));
  return NetworkConfig::preset(preset.empty() ? "latency" : preset);
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw std::invalid_argument("size must look like HxW, got '" + s + "'");
  std::size_t h = 0, w = 0, p1 = 0, p2 = 0;
  try {
    h = std::stoul(s.substr(0, x), &p1);
    w = std::stoul(s.substr(x + 1), &p2);
  } catch (const std::exception&) {
    throw std::invalid_argument("size must look like HxW, got '" + s + "'");
  }
  if (p1 != x || p2 != s.size() - x - 1 || h == 0 || w == 0) throw std::invalid_argument("bad size '" + s + "'");
  return {h, w};
}

std::string kilo(std::uint64_t n) {
  return std::to_string(n / 1000) + "k";
}

std::string fmt(double v, int prec = 2) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------

struct UpscaleArgs {
  std::string input, output, model = "bilinear", reference;
  std::size_t scale = 4;
};

int cmd_upscale(const UpscaleArgs& a) {
  const auto lr = read_png(a.input);
  TensorF sr;
  if (a.model == "bilinear") {
    sr = bilinear_resize(lr, static_cast<double>(a.scale));
  } else {
    const auto net = load_weights(a.model);
    sr = net.forward(lr);
  }
  sr = quantize(sr);
  write_png(a.output, sr);
  std::cout << "wrote " << a.output << " (" << sr.w() << "x" << sr.h() << ")\n";
  if (!a.reference.empty()) {
    const auto ref = read_png(a.reference);
    if (!(ref.shape() == sr.shape()))
      throw std::runtime_error("reference is " + ref.shape().str() + ", output is " + sr.shape().str());
    const auto ya = rgb_to_y(sr), yb = rgb_to_y(ref);
    std::cout << "psnr_y " << fmt(psnr(ya, yb), 4) << " dB, ssim_y " << fmt(ssim(ya, yb), 4) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct CostArgs {
  std::string config, preset, input_size = "24x24";
  bool table = false, json = false;
};

void print_table(std::size_t h, std::size_t w) {
  auto row = [&](const std::string& label, const NetworkConfig& c) {
    const auto r = count_config(c, h, w);
    std::printf("  %-28s %8s %10llu %16llu\n", label.c_str(), kilo(r.params).c_str(),
                static_cast<unsigned long long>(r.params), static_cast<unsigned long long>(r.macs));
  };
  auto header = [](const char* title) {
    std::printf("%s\n  %-28s %8s %10s %16s\n", title, "setting", "params", "exact", "macs");
  };
  header("channel-split ratio (G5 B6 HI3, front, feature extraction)");
  for (double a : {0.125, 0.25, 0.5, 1.0}) {
    auto c = NetworkConfig::latency_focused();
    c.alpha = a;
    row("alpha = " + fmt(a, 3), c);
  }
  header("\nhybrid index (alpha 0.25)");
  for (std::size_t hi : {2u, 3u, 4u}) {
    auto c = NetworkConfig::latency_focused();
    c.hybrid_index = hi;
    row("HI = " + std::to_string(hi), c);
  }
  header("\nhybrid mode (HI 3)");
  for (auto m : {HybridMode::Front, HybridMode::End, HybridMode::Mixed}) {
    auto c = NetworkConfig::latency_focused();
    c.hybrid_mode = m;
    row(std::string(to_string(m)), c);
  }
  header("\nreplacement location (HI 3, alpha 0.25)");
  for (auto l : {ReplacementLocation::FeatureExtractionOnly, ReplacementLocation::FEPlusUpsampling,
                 ReplacementLocation::Throughout}) {
    auto c = NetworkConfig::latency_focused();
    c.replacement_location = l;
    row(std::string(to_string(l)), c);
  }
  header("\npresets");
  row("latency", NetworkConfig::latency_focused());
  row("accuracy", NetworkConfig::accuracy_focused());
}

int cmd_cost(const CostArgs& a) {
  const auto [h, w] = parse_size(a.input_size);
  if (a.table) {
    print_table(h, w);
    return 0;
  }
  const auto cfg = load_config(a.config, a.preset);
  const auto r = count_config(cfg, h, w);
  if (a.json) {
    auto j = r.to_json();
    j["input_size"] = {h, w};
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::printf("input %zux%zu, MACs are multiply-accumulates\n", h, w);
  std::printf("params %llu (%s)\nmacs   %llu\n", static_cast<unsigned long long>(r.params), kilo(r.params).c_str(),
              static_cast<unsigned long long>(r.macs));
  std::printf("\n  %-20s %10s %16s\n", "stage", "params", "macs");
  for (const auto& s : r.per_stage)
    std::printf("  %-20s %10llu %16llu\n", s.name.c_str(), static_cast<unsigned long long>(s.params),
                static_cast<unsigned long long>(s.macs));
  std::printf("\nanalytical reductions (alpha %.4g, k 3, N %zu)\n", cfg.alpha, cfg.feature_maps);
  for (const auto& [k, v] : r.reductions) std::printf("  %-10s %.6f\n", k.c_str(), v);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string model = "bilinear", dataset;
  std::size_t scale = 4;
  long shave = -1;
  bool json = false;
};

int cmd_eval(const EvalArgs& a) {
  std::optional<Network<float>> net;
  std::size_t scale = a.scale;
  Upscaler method;
  std::string id = a.model;
  if (a.model == "bilinear") {
    method = bilinear_upscale;
  } else if (a.model == "passthrough") {
    // Returns HR-sized input unchanged; useful with lr_x1 folders and for checks.
    method = [](const TensorF& lr, std::size_t s) { return s == 1 ? lr : bilinear_resize(lr, static_cast<double>(s)); };
  } else {
    net = load_weights(a.model);
    scale = net->config().scale;
    method = network_upscaler(*net);
    id = fs::path(a.model).filename().string();
  }
  const auto ds = load_dataset(a.dataset, scale);
  for (const auto& e : ds.errors) std::cerr << "warning: skipped " << e.file << ": " << e.message << "\n";
  const std::size_t shave = a.shave < 0 ? scale : static_cast<std::size_t>(a.shave);
  const auto r = evaluate(method, id, ds, shave);
  if (a.json) {
    auto j = r.to_json();
    j["errors"] = nlohmann::json::array();
    for (const auto& e : ds.errors) j["errors"].push_back({{"file", e.file}, {"message", e.message}});
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::printf("dataset %s, method %s, x%zu, shave %zu\n\n  %-24s %10s %8s\n", r.dataset.c_str(), r.method.c_str(),
              r.scale, r.shave, "image", "psnr_y", "ssim_y");
  for (const auto& s : r.images) std::printf("  %-24s %10s %8s\n", s.id.c_str(), fmt(s.psnr).c_str(), fmt(s.ssim, 4).c_str());
  std::printf("  %-24s %10s %8s\n", "mean", fmt(r.mean_psnr).c_str(), fmt(r.mean_ssim, 4).c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, preset = "toy", dataset, out = "weights.ssrw", loss_csv;
  bool synthetic = false;
  std::size_t synthetic_count = 64, synthetic_size = 64, pretrain_steps = 0;
  std::uint64_t init_seed = 1, data_seed = 100;
  TrainConfig train;
};

int cmd_train(const TrainArgs& a) {
  const auto cfg = load_config(a.config, a.preset);
  if (a.synthetic == !a.dataset.empty()) throw std::invalid_argument("give exactly one of --synthetic or --dataset");
  auto data_for = [&](std::size_t scale) {
    if (a.synthetic) return synthetic_dataset(a.synthetic_count, a.synthetic_size, scale, a.data_seed);
    auto ds = load_dataset(a.dataset, scale);
    for (const auto& e : ds.errors) std::cerr << "warning: skipped " << e.file << ": " << e.message << "\n";
    return ds;
  };
  auto net = build(cfg, a.init_seed);
  std::size_t last_print = 0;
  auto observe = [&](const TracePoint& p) {
    if (p.step == 0 || p.step + 1 - last_print >= 100) {
      std::fprintf(stderr, "step %6zu  lr %.3g  loss %.5f\n", p.step, p.lr, p.loss);
      last_print = p.step + 1;
    }
  };
  if (a.pretrain_steps > 0 && cfg.scale == 4) {
    auto c2 = cfg;
    c2.scale = 2;
    auto x2 = build(c2, a.init_seed);
    auto t2 = a.train;
    t2.steps = a.pretrain_steps;
    std::cerr << "pretraining x2 for " << t2.steps << " steps\n";
    train(x2, data_for(2), t2, observe);
    transfer_pretrained(x2, net);
  }
  const auto trace = train(net, data_for(cfg.scale), a.train, observe);
  save_weights(net, a.out);
  std::cout << "wrote " << a.out << " (" << net.param_count() << " params)\n";
  if (!a.loss_csv.empty()) {
    std::ofstream os(a.loss_csv);
    if (!os) throw std::runtime_error("cannot open '" + a.loss_csv + "'");
    trace.write_csv(os);
    std::cout << "wrote " << a.loss_csv << "\n";
  }
  if (!trace.points.empty())
    std::cout << "loss " << trace.points.front().loss << " -> " << trace.points.back().loss << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1", model, images, ratings = "ratings.jsonl";
  int port = 8080;
  std::size_t workers = 0;
};

httplib::Server* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
  std::shared_ptr<const Network<float>> net;
  if (!a.model.empty()) net = std::make_shared<const Network<float>>(load_weights(a.model));
  else std::cerr << "no --model given; only method=bilinear (and splitsr below 2x) is available\n";
  auto sched = std::make_shared<ZoomScheduler>(net);
  const auto ds = load_dataset(a.images, 1);
  for (const auto& e : ds.errors) std::cerr << "warning: skipped " << e.file << ": " << e.message << "\n";
  if (ds.pairs.empty()) throw std::runtime_error("no PNG images in '" + a.images + "'");
  for (const auto& p : ds.pairs) sched->add_image(p.id, p.hr);
  sched->start(a.workers);
  TileService svc(sched, a.ratings);
  httplib::Server srv;
  svc.install(srv);
  g_server = &srv;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "serving " << ds.pairs.size() << " image(s) on http://" << a.host << ":" << a.port << "\n" << std::flush;
  if (!srv.listen(a.host, a.port)) throw std::runtime_error("cannot listen on " + a.host + ":" + std::to_string(a.port));
  sched->stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SplitSR super-resolution: upscale, cost, eval, train, serve"};
  app.require_subcommand(1);

  UpscaleArgs up;
  auto* s_up = app.add_subcommand("upscale", "Upscale a PNG with a weight file or bilinear");
  s_up->add_option("input", up.input, "Input PNG")->required();
  s_up->add_option("output", up.output, "Output PNG")->required();
  s_up->add_option("-m,--model", up.model, "Weight file, or 'bilinear'");
  s_up->add_option("-s,--scale", up.scale, "Scale for bilinear")->check(CLI::Range(1, 8));
  s_up->add_option("-r,--reference", up.reference, "HR reference PNG; prints Y-PSNR/SSIM");

  CostArgs cost;
  auto* s_cost = app.add_subcommand("cost", "Count parameters and MACs");
  s_cost->add_option("config", cost.config, "Network config file (key=value or JSON)");
  s_cost->add_option("-p,--preset", cost.preset, "latency | accuracy | toy");
  s_cost->add_option("--input-size", cost.input_size, "LR input size HxW");
  s_cost->add_flag("--table", cost.table, "Print the parameter sweeps");
  s_cost->add_flag("--json", cost.json, "JSON output");

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "PSNR/SSIM on the Y channel over a dataset directory");
  s_eval->add_option("dataset", ev.dataset, "Directory of HR PNGs")->required();
  s_eval->add_option("-m,--model", ev.model, "Weight file, 'bilinear' or 'passthrough'");
  s_eval->add_option("-s,--scale", ev.scale, "Scale (ignored for weight files)")->check(CLI::Range(1, 8));
  s_eval->add_option("--shave", ev.shave, "Border pixels to drop (default: scale)");
  s_eval->add_flag("--json", ev.json, "JSON output");

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "Train a network");
  s_train->add_option("config", tr.config, "Network config file");
  s_train->add_option("-p,--preset", tr.preset, "Preset when no config file is given");
  s_train->add_flag("--synthetic", tr.synthetic, "Use the built-in synthetic dataset");
  s_train->add_option("--dataset", tr.dataset, "Directory of HR PNGs");
  s_train->add_option("--synthetic-count", tr.synthetic_count);
  s_train->add_option("--synthetic-size", tr.synthetic_size);
  s_train->add_option("--data-seed", tr.data_seed);
  s_train->add_option("--init-seed", tr.init_seed);
  s_train->add_option("-o,--out", tr.out, "Output weight file");
  s_train->add_option("--loss-csv", tr.loss_csv, "Write the loss trace as CSV");
  s_train->add_option("--steps", tr.train.steps);
  s_train->add_option("--lr", tr.train.learning_rate);
  s_train->add_option("--batch", tr.train.batch_size);
  s_train->add_option("--patch", tr.train.hr_patch, "HR patch size");
  s_train->add_option("--decay-every", tr.train.decay_every, "Halve lr every N steps (default steps/3)");
  s_train->add_option("--seed", tr.train.seed, "Sampling seed");
  s_train->add_option("--pretrain-steps", tr.pretrain_steps, "x2 pretraining steps for x4 configs");

  ServeArgs sv;
  auto* s_serve = app.add_subcommand("serve", "Run the tile service");
  s_serve->add_option("images", sv.images, "Directory of PNG images")->required();
  s_serve->add_option("-m,--model", sv.model, "Weight file");
  s_serve->add_option("--host", sv.host);
  s_serve->add_option("--port", sv.port);
  s_serve->add_option("--workers", sv.workers, "Worker threads (default: hardware)");
  s_serve->add_option("--ratings", sv.ratings, "Ratings log (JSON lines)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s_up) return cmd_upscale(up);
    if (*s_cost) return cmd_cost(cost);
    if (*s_eval) return cmd_eval(ev);
    if (*s_train) return cmd_train(tr);
    if (*s_serve) return cmd_serve(sv);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
