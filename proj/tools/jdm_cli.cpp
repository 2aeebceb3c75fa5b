// jdm: synthetic-scene generation, decomposition priors, JDM-HDRNet training,
// inference, evaluation, ablations, and homography alignment.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "jdm/dataset.hpp"
#include "jdm/decomposition.hpp"
#include "jdm/homography.hpp"
#include "jdm/metrics.hpp"
#include "jdm/png_io.hpp"
#include "jdm/scube.hpp"

namespace fs = std::filesystem;
using namespace jdm;

namespace {

constexpr const char* kCodeVersion = "jdm 1.0.0";

std::string config_hash(const std::string& text) {
  // FNV-1a, stable across platforms
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const RunConfig& config) {
  nlohmann::json m;
  m["command"] = command;
  m["config_hash"] = config_hash(config.to_json());
  m["seed"] = config.seed;
  m["code_version"] = kCodeVersion;
  std::ofstream os(dir + "/manifest.json");
  os << m.dump(2) << "\n";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
}

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::from_json_file(path);
}

std::vector<EnhanceSample> load_enhance_dataset(const std::string& dir) {
  DatasetIndex index = DatasetIndex::scan(dir);
  std::vector<EnhanceSample> out;
  for (const auto& rec : index.records) {
    SceneBundle b = load_scene_dir(rec);
    EnhanceSample s;
    s.input16 = b.input16;
    s.msi = b.msi;
    s.shading = b.shading;
    s.seg = b.truth.segmentation;
    s.target8 = b.target8;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<DecompSample> load_decomp_dataset(const std::string& dir) {
  DatasetIndex index = DatasetIndex::scan(dir);
  std::vector<DecompSample> out;
  for (const auto& rec : index.records) {
    SceneBundle b = load_scene_dir(rec);
    DecompSample s;
    s.rgb = b.input16;
    s.msi = b.msi;
    s.material_truth = b.truth.segmentation;
    s.shading_truth = quantize_shading(b.shading);
    out.push_back(std::move(s));
  }
  return out;
}

void dump_attention(const std::string& path, const Tensor& a) {
  nlohmann::json j = nlohmann::json::array();
  const int C = a.dim(0);
  for (int r = 0; r < C; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < C; ++c) row.push_back(a[r * C + c]);
    j.push_back(row);
  }
  write_text(path, j.dump(2) + "\n");
}

int run(int argc, char** argv) {
  CLI::App app{"joint RGB-spectral decomposition guided tone enhancement"};
  app.require_subcommand(1);

  // ---- gen-synthetic ----
  auto* gen = app.add_subcommand("gen-synthetic", "render synthetic scenes with ground truth");
  std::uint64_t gen_seed = 7;
  int gen_count = 4, gen_hw = 64, gen_channels = 31, gen_msi_hw = 16, gen_msi_bands = 10;
  bool gen_plain = false;
  std::string gen_out = "scenes";
  gen->add_option("--seed", gen_seed);
  gen->add_option("--count", gen_count);
  gen->add_option("--hw", gen_hw);
  gen->add_option("--channels", gen_channels);
  gen->add_option("--msi-hw", gen_msi_hw);
  gen->add_option("--msi-bands", gen_msi_bands);
  gen->add_flag("--no-metameric", gen_plain, "disable the metameric material pair");
  gen->add_option("--out", gen_out)->required();

  // ---- simulate-msi ----
  auto* sim = app.add_subcommand("simulate-msi", "downsample a cube to an Lr-MSI");
  std::string sim_cube, sim_out;
  int sim_bands = 10, sim_hw = 16;
  sim->add_option("--cube", sim_cube)->required();
  sim->add_option("--out", sim_out)->required();
  sim->add_option("--bands", sim_bands);
  sim->add_option("--hw", sim_hw);

  // ---- decompose ----
  auto* dec = app.add_subcommand("decompose", "intrinsic priors from a hyperspectral cube");
  std::string dec_cube, dec_out, dec_ckpt, dec_rgb, dec_msi;
  dec->add_option("--cube", dec_cube)->required();
  dec->add_option("--out", dec_out)->required();
  dec->add_option("--checkpoint", dec_ckpt, "decomposition checkpoint for learned predictions");
  dec->add_option("--rgb", dec_rgb, "16-bit input PNG (with --checkpoint)");
  dec->add_option("--msi", dec_msi, "Lr-MSI SCUBE (with --checkpoint)");

  // ---- train-decomp ----
  auto* td = app.add_subcommand("train-decomp", "train the joint decomposition model");
  std::string td_data, td_out, td_config;
  td->add_option("--data", td_data)->required();
  td->add_option("--out", td_out)->required();
  td->add_option("--config", td_config);

  // ---- train-enhance ----
  auto* te = app.add_subcommand("train-enhance", "train JDM-HDRNet");
  std::string te_data, te_out, te_config;
  te->add_option("--data", te_data)->required();
  te->add_option("--out", te_out)->required();
  te->add_option("--config", te_config);

  // ---- enhance ----
  auto* en = app.add_subcommand("enhance", "single-image inference");
  std::string en_input, en_msi, en_shading, en_seg, en_ckpt, en_out, en_dump, en_config;
  en->add_option("--input", en_input)->required();
  en->add_option("--msi", en_msi)->required();
  en->add_option("--shading", en_shading)->required();
  en->add_option("--seg", en_seg)->required();
  en->add_option("--checkpoint", en_ckpt, "omit for the identity-initialized network");
  en->add_option("--out", en_out)->required();
  en->add_option("--dump", en_dump, "directory for S_hat, g, A, w dumps");
  en->add_option("--config", en_config);

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "PSNR / SSIM / deltaE / mIoU report");
  std::string ev_pred, ev_target, ev_pred_seg, ev_gt_seg, ev_out;
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--target", ev_target)->required();
  ev->add_option("--pred-seg", ev_pred_seg);
  ev->add_option("--gt-seg", ev_gt_seg);
  ev->add_option("--out", ev_out);

  // ---- ablate ----
  auto* ab = app.add_subcommand("ablate", "sweep one experiment axis");
  std::string ab_axis, ab_out, ab_config;
  std::string ab_values;
  ab->add_option("--axis", ab_axis, "spectral | spatial | experts | priors")->required();
  ab->add_option("--values", ab_values, "comma-separated settings");
  ab->add_option("--config", ab_config);
  ab->add_option("--out", ab_out)->required();

  // ---- align ----
  auto* al = app.add_subcommand("align", "homography from correspondences + warp");
  std::string al_corr, al_image, al_out, al_dump;
  int al_h = 0, al_w = 0;
  al->add_option("--correspondences", al_corr)->required();
  al->add_option("--image", al_image)->required();
  al->add_option("--out", al_out)->required();
  al->add_option("--out-h", al_h);
  al->add_option("--out-w", al_w);
  al->add_option("--dump-homography", al_dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage pointer
    return 2;
  }

  if (*gen) {
    RunConfig rc;
    rc.seed = gen_seed;
    rc.scenes = gen_count;
    rc.crop = gen_hw;
    rc.scene_channels = gen_channels;
    rc.msi_hw = gen_msi_hw;
    rc.msi_bands = gen_msi_bands;
    fs::create_directories(gen_out);
    SyntheticOptions opts = rc.synthetic_options();
    opts.metameric = !gen_plain;
    for (int i = 0; i < gen_count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%03d", i);
      write_scene_dir(gen_out + "/" + name, make_scene_bundle(gen_seed * 1000 + i, opts));
    }
    write_manifest(gen_out, "gen-synthetic", rc);
    std::cout << "wrote " << gen_count << " scenes under " << gen_out << "\n";
  } else if (*sim) {
    SpectralCube cube = read_cube(sim_cube);
    write_msi(simulate_lr_msi(cube, sim_bands, sim_hw), sim_out);
    std::cout << "wrote " << sim_out << "\n";
  } else if (*dec) {
    SpectralCube cube = read_cube(dec_cube);
    fs::create_directories(dec_out);
    ShadingMap shading = estimate_shading_nir(cube);
    write_gray16_png(dec_out + "/shading.png", shading.values, shading.height, shading.width);
    ShadingClassMap classes = quantize_shading(shading);
    write_label_png(dec_out + "/shading_classes.png", classes.labels, classes.height,
                    classes.width);
    Image cube_im(cube.height, cube.width, cube.channels());
    cube_im.values = cube.values;
    Image refl = retinex_reflectance(cube_im, shading);
    SpectralCube refl_cube = cube;
    refl_cube.values = refl.values;
    write_cube(refl_cube, dec_out + "/reflectance.scube");
    if (!dec_ckpt.empty()) {
      if (dec_rgb.empty() || dec_msi.empty()) {
        throw ValueError("decompose: --checkpoint needs --rgb and --msi");
      }
      RgbImage rgb = read_rgb_png(dec_rgb);
      LrMsi msi = read_msi(dec_msi);
      DecompConfig cfg;
      cfg.msi_bands = msi.bands();
      DecompNet net(cfg);
      ParamMap params = net.named_params();
      assign_params(params, load_checkpoint(dec_ckpt));
      MaterialSegmentation seg = net.predict_material(rgb, msi);
      write_label_png(dec_out + "/pred_seg.png", seg.labels, seg.height, seg.width);
      ShadingClassMap pred_classes = net.predict_shading(rgb, msi);
      write_label_png(dec_out + "/pred_shading_classes.png", pred_classes.labels,
                      pred_classes.height, pred_classes.width);
    }
    std::cout << "wrote priors under " << dec_out << "\n";
  } else if (*td) {
    RunConfig rc = load_config(td_config);
    std::vector<DecompSample> data = load_decomp_dataset(td_data);
    DecompConfig cfg;
    cfg.msi_bands = data[0].msi.bands();
    cfg.seed = rc.seed;
    cfg.lr = rc.lr;
    cfg.steps = rc.steps;
    cfg.batch = rc.batch;
    cfg.use_msi = rc.use_r;
    DecompNet net = train_decomposition(data, cfg);
    save_checkpoint(td_out, net.named_params());
    write_text(td_out + ".manifest.json",
               nlohmann::json{{"command", "train-decomp"},
                              {"config_hash", config_hash(rc.to_json())},
                              {"seed", rc.seed},
                              {"code_version", kCodeVersion}}
                       .dump(2) +
                   "\n");
    std::cout << "wrote " << td_out << "\n";
  } else if (*te) {
    RunConfig rc = load_config(te_config);
    std::vector<EnhanceSample> data = load_enhance_dataset(te_data);
    EnhanceConfig cfg = rc.enhance_config();
    cfg.msi_bands = data[0].msi.bands();
    EnhanceNet net = train_enhancement(data, cfg);
    save_checkpoint(te_out, net.named_params());
    write_text(te_out + ".manifest.json",
               nlohmann::json{{"command", "train-enhance"},
                              {"config_hash", config_hash(rc.to_json())},
                              {"seed", rc.seed},
                              {"code_version", kCodeVersion}}
                       .dump(2) +
                   "\n");
    std::cout << "wrote " << te_out << "\n";
  } else if (*en) {
    RunConfig rc = load_config(en_config);
    RgbImage input = read_rgb_png(en_input);
    LrMsi msi = read_msi(en_msi);
    ShadingMap shading;
    read_gray16_png(en_shading, shading.values, shading.height, shading.width);
    shading.values = shading.values.max(1e-4);
    MaterialSegmentation seg;
    read_label_png(en_seg, seg.labels, seg.height, seg.width);
    EnhanceConfig cfg = rc.enhance_config();
    cfg.full = input.height;
    cfg.msi_bands = msi.bands();
    EnhanceNet net(cfg);
    if (!en_ckpt.empty()) {
      ParamMap params = net.named_params();
      assign_params(params, load_checkpoint(en_ckpt));
    }
    EnhanceOutput out = net.forward(input, msi, shading, seg);
    write_rgb_png(en_out, tensor_to_rgb(out.final, 8));
    if (!en_dump.empty()) {
      fs::create_directories(en_dump);
      write_gray16_png(en_dump + "/s_hat.png", out.s_hat.data().min(1.0), cfg.full, cfg.full);
      write_gray16_png(en_dump + "/guidance.png", out.guidance.data(), cfg.full, cfg.full);
      dump_attention(en_dump + "/attention.json", out.attention);
      nlohmann::json wj = nlohmann::json::array();
      for (double w : out.weights) wj.push_back(w);
      write_text(en_dump + "/expert_weights.json", wj.dump() + "\n");
      write_manifest(en_dump, "enhance", rc);
    }
    std::cout << "wrote " << en_out << "\n";
  } else if (*ev) {
    RgbImage pred = read_rgb_png(ev_pred);
    RgbImage target = read_rgb_png(ev_target);
    EvalReport rep;
    if (!ev_pred_seg.empty() && !ev_gt_seg.empty()) {
      MaterialSegmentation ps, gs;
      read_label_png(ev_pred_seg, ps.labels, ps.height, ps.width);
      read_label_png(ev_gt_seg, gs.labels, gs.height, gs.width);
      rep = evaluate(pred, target, &ps, &gs);
    } else {
      rep = evaluate(pred, target);
    }
    std::ostringstream table;
    table << std::left << std::setw(10) << "metric" << std::right << std::setw(12) << "value"
          << "\n";
    table << std::left << std::setw(10) << "psnr_db" << std::right << std::setw(12);
    if (rep.psnr_infinite) table << "inf";
    else table << std::fixed << std::setprecision(4) << rep.psnr_db;
    table << "\n";
    table << std::left << std::setw(10) << "ssim" << std::right << std::setw(12) << std::fixed
          << std::setprecision(4) << rep.ssim << "\n";
    table << std::left << std::setw(10) << "delta_e" << std::right << std::setw(12) << rep.delta_e
          << "\n";
    if (!rep.per_class_iou.empty()) {
      table << std::left << std::setw(10) << "miou" << std::right << std::setw(12) << rep.miou
            << "\n";
    }
    std::cout << table.str();
    if (!ev_out.empty()) write_text(ev_out, rep.to_json() + "\n");
  } else if (*ab) {
    RunConfig rc = load_config(ab_config);
    std::vector<std::string> values;
    if (!ab_values.empty()) {
      std::stringstream ss(ab_values);
      std::string item;
      while (std::getline(ss, item, ',')) values.push_back(item);
    }
    AblationTable table = run_ablation(rc, ab_axis, values);
    fs::create_directories(ab_out);
    write_text(ab_out + "/table.json", table.to_json() + "\n");
    write_text(ab_out + "/table.txt", table.to_text());
    write_manifest(ab_out, "ablate", rc);
    std::cout << table.to_text();
  } else if (*al) {
    std::vector<Correspondence> pairs = load_correspondences(al_corr);
    Homography h = estimate_homography_dlt(pairs);
    RgbImage image = read_rgb_png(al_image);
    const int oh = al_h > 0 ? al_h : image.height;
    const int ow = al_w > 0 ? al_w : image.width;
    write_rgb_png(al_out, warp_image(image, h, oh, ow));
    if (!al_dump.empty()) {
      nlohmann::json j = nlohmann::json::array();
      for (int r = 0; r < 3; ++r) {
        j.push_back({h.m(r, 0), h.m(r, 1), h.m(r, 2)});
      }
      write_text(al_dump, j.dump() + "\n");
    }
    std::cout << "wrote " << al_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error&) {
    return 2;  // unreachable: CLI11_PARSE handles its own errors
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
