#include "jdm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "jdm/png_io.hpp"
#include "jdm/scube.hpp"

namespace fs = std::filesystem;

namespace jdm {

namespace {

double quantize_to(double v, int maxval) {
  return std::round(std::clamp(v, 0.0, 1.0) * maxval) / static_cast<double>(maxval);
}

void quantize_image(RgbImage& im) {
  const int maxval = im.bit_depth == 8 ? 255 : 65535;
  for (std::int64_t i = 0; i < im.values.size(); ++i) {
    im.values[i] = quantize_to(im.values[i], maxval);
  }
}

// per-category tone gammas; the metameric pair (building, road) gets
// well-separated exponents so the spectral stream carries real signal
constexpr double kCategoryGamma[kNumMaterialClasses] = {0.62, 1.35, 0.92, 1.25, 1.48, 1.0};

double s_curve(double t) {
  const double k = 0.6;
  return (1.0 - k) * t + k * t * t * (3.0 - 2.0 * t);
}

}  // namespace

RgbImage reference_tone_target(const SceneTruth& truth, const SensitivityBank& bank) {
  SceneTruth flat = truth;
  flat.shading = Array::Constant(truth.shading.size(), 1.0);
  RgbImage reflectance_render = render_rgb(flat, bank);

  RgbImage target(truth.height, truth.width, 8);
  for (std::int64_t p = 0; p < truth.shading.size(); ++p) {
    const int cat = truth.segmentation.labels[p];
    const double gamma = kCategoryGamma[cat];
    const double shade = std::sqrt(truth.shading[p]);
    for (int c = 0; c < 3; ++c) {
      const double r = reflectance_render.values[p * 3 + c];
      target.values[p * 3 + c] = std::clamp(s_curve(std::pow(r, gamma)) * shade, 0.0, 1.0);
    }
  }
  quantize_image(target);
  return target;
}

SceneBundle make_scene_bundle(std::uint64_t seed, const SyntheticOptions& options) {
  SceneBundle b;
  SceneOptions scene_opts;
  scene_opts.metameric_pair = options.metameric;
  scene_opts.anchor_seed = options.anchor_seed;
  b.truth = generate_synthetic_scene(seed, options.hw, options.channels, scene_opts);
  b.cube = render_cube(b.truth);
  // keep the bundle reproducible from its own files: the cube is stored at
  // f32, so derive everything downstream from f32-rounded values
  for (std::int64_t i = 0; i < b.cube.values.size(); ++i) {
    b.cube.values[i] = static_cast<double>(static_cast<float>(b.cube.values[i]));
  }
  b.msi = simulate_lr_msi(b.cube, options.msi_bands, options.msi_hw);
  SensitivityBank bank = default_rgb_bank(b.truth.wavelengths_nm);
  b.input16 = render_rgb(b.truth, bank);
  quantize_image(b.input16);
  b.target8 = reference_tone_target(b.truth, bank);
  b.shading = estimate_shading_nir(b.cube);
  return b;
}

EnhanceSample to_enhance_sample(const SceneBundle& bundle) {
  EnhanceSample s;
  s.input16 = bundle.input16;
  s.msi = bundle.msi;
  s.shading = bundle.shading;
  s.seg = bundle.truth.segmentation;
  s.target8 = bundle.target8;
  return s;
}

DecompSample to_decomp_sample(const SceneBundle& bundle) {
  DecompSample s;
  s.rgb = bundle.input16;
  s.msi = bundle.msi;
  s.material_truth = bundle.truth.segmentation;
  s.shading_truth = quantize_shading(bundle.shading);
  return s;
}

LrMsi filter_msi_window(const LrMsi& msi, double lo, double hi) {
  std::vector<int> keep;
  for (int b = 0; b < msi.bands(); ++b) {
    const auto& [blo, bhi] = msi.band_ranges_nm[static_cast<std::size_t>(b)];
    if (blo >= lo - 1e-9 && bhi <= hi + 1e-9) keep.push_back(b);
  }
  if (keep.empty()) throw ValueError("filter_msi_window: no bands inside the window");
  LrMsi out;
  out.height = msi.height;
  out.width = msi.width;
  for (int b : keep) out.band_ranges_nm.push_back(msi.band_ranges_nm[static_cast<std::size_t>(b)]);
  out.values = Array::Zero(static_cast<std::int64_t>(msi.height) * msi.width * keep.size());
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(msi.height) * msi.width; ++p) {
    for (std::size_t i = 0; i < keep.size(); ++i) {
      out.values[p * static_cast<std::int64_t>(keep.size()) + static_cast<std::int64_t>(i)] =
          msi.values[p * msi.bands() + keep[i]];
    }
  }
  return out;
}

void split_80_20(int count, std::uint64_t seed, std::vector<int>& train_idx,
                 std::vector<int>& test_idx) {
  std::vector<int> order(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  RandomStream rng(seed ^ 0x8020802080208020ULL);
  rng.shuffle(order);
  const int n_train = count - count / 5;
  train_idx.assign(order.begin(), order.begin() + n_train);
  test_idx.assign(order.begin() + n_train, order.end());
}

void write_scene_dir(const std::string& dir, const SceneBundle& bundle) {
  fs::create_directories(dir);
  write_cube(bundle.cube, dir + "/cube.scube");
  write_msi(bundle.msi, dir + "/msi.scube");
  write_rgb_png(dir + "/input16.png", bundle.input16);
  write_rgb_png(dir + "/target8.png", bundle.target8);
  write_gray16_png(dir + "/shading.png", bundle.shading.values, bundle.shading.height,
                   bundle.shading.width);
  write_label_png(dir + "/seg.png", bundle.truth.segmentation.labels, bundle.truth.height,
                  bundle.truth.width);
}

DatasetIndex DatasetIndex::scan(const std::string& root) {
  DatasetIndex index;
  if (!fs::is_directory(root)) throw IoError("dataset: " + root + " is not a directory");
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path().string());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    SampleRecord rec;
    rec.dir = d;
    rec.input16 = d + "/input16.png";
    rec.target8 = d + "/target8.png";
    rec.cube = d + "/cube.scube";
    rec.msi = d + "/msi.scube";
    rec.shading = d + "/shading.png";
    rec.seg = d + "/seg.png";
    for (const std::string* p : {&rec.input16, &rec.target8, &rec.cube, &rec.msi, &rec.shading,
                                 &rec.seg}) {
      if (!fs::exists(*p)) throw IoError("dataset: missing file " + *p);
    }
    index.records.push_back(rec);
  }
  if (index.records.empty()) throw IoError("dataset: no scene directories under " + root);
  return index;
}

SceneBundle load_scene_dir(const SampleRecord& record) {
  SceneBundle b;
  b.cube = read_cube(record.cube);
  b.msi = read_msi(record.msi);
  b.input16 = read_rgb_png(record.input16);
  b.target8 = read_rgb_png(record.target8);
  int h, w;
  read_gray16_png(record.shading, b.shading.values, h, w);
  b.shading.height = h;
  b.shading.width = w;
  b.shading.values = b.shading.values.max(1e-4);
  b.truth.height = h;
  b.truth.width = w;
  Eigen::ArrayXi labels;
  read_label_png(record.seg, labels, h, w);
  b.truth.segmentation = MaterialSegmentation(h, w);
  b.truth.segmentation.labels = labels;
  return b;
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig RunConfig::from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw IoError("config: malformed JSON");
  RunConfig c;
  c.preset = j.value("preset", c.preset);
  if (c.preset == "paper") {
    c.crop = 512;
    c.lowres = 256;
    c.grid_h = c.grid_w = 16;
    c.depth = 8;
    c.lr = 1e-4;
    c.steps = 20000;
  } else if (c.preset != "toy") {
    throw ValueError("config: preset must be \"toy\" or \"paper\"");
  }
  c.seed = j.value("seed", c.seed);
  c.scenes = j.value("scenes", c.scenes);
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.steps = j.value("steps", c.steps);
  c.crop = j.value("crop", c.crop);
  c.lowres = j.value("lowres", c.lowres);
  if (j.contains("grid")) {
    auto g = j.at("grid");
    c.grid_h = g.at(0).get<int>();
    c.grid_w = g.at(1).get<int>();
    c.depth = g.at(2).get<int>();
  }
  c.n_experts = j.value("n_experts", c.n_experts);
  c.use_s = j.value("use_s", c.use_s);
  c.use_r = j.value("use_r", c.use_r);
  c.use_m = j.value("use_m", c.use_m);
  c.msi_hw = j.value("msi_hw", c.msi_hw);
  c.msi_bands = j.value("msi_bands", c.msi_bands);
  if (j.contains("msi_window")) {
    c.msi_window_lo = j.at("msi_window").at(0).get<double>();
    c.msi_window_hi = j.at("msi_window").at(1).get<double>();
  }
  c.scene_channels = j.value("scene_channels", c.scene_channels);
  return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json_text(ss.str());
}

std::string RunConfig::to_json() const {
  nlohmann::json j;
  j["preset"] = preset;
  j["seed"] = seed;
  j["scenes"] = scenes;
  j["lr"] = lr;
  j["batch"] = batch;
  j["steps"] = steps;
  j["crop"] = crop;
  j["lowres"] = lowres;
  j["grid"] = {grid_h, grid_w, depth};
  j["n_experts"] = n_experts;
  j["use_s"] = use_s;
  j["use_r"] = use_r;
  j["use_m"] = use_m;
  j["msi_hw"] = msi_hw;
  j["msi_bands"] = msi_bands;
  j["msi_window"] = {msi_window_lo, msi_window_hi};
  j["scene_channels"] = scene_channels;
  return j.dump(2);
}

EnhanceConfig RunConfig::enhance_config() const {
  EnhanceConfig e;
  e.full = crop;
  e.lowres = lowres;
  e.grid_h = grid_h;
  e.grid_w = grid_w;
  e.depth = depth;
  e.n_experts = n_experts;
  e.msi_bands = msi_bands;
  e.msi_hw = msi_hw;
  e.msi_window_lo = msi_window_lo;
  e.msi_window_hi = msi_window_hi;
  e.use_s = use_s;
  e.use_r = use_r;
  e.use_m = use_m;
  e.seed = seed;
  e.lr = lr;
  e.steps = steps;
  e.batch = batch;
  return e;
}

SyntheticOptions RunConfig::synthetic_options() const {
  SyntheticOptions o;
  o.hw = crop;
  o.channels = scene_channels;
  o.msi_hw = msi_hw;
  o.msi_bands = msi_bands;
  o.metameric = true;
  return o;
}

// ---------------------------------------------------------------------------
// ablation driver
// ---------------------------------------------------------------------------

namespace {

struct EvalBundle {
  double psnr = 0.0, ssim = 0.0, delta_e = 0.0;
};

EvalBundle evaluate_net(const EnhanceNet& net, const std::vector<EnhanceSample>& test) {
  EvalBundle out;
  for (const auto& s : test) {
    EnhanceOutput o = net.forward(s.input16, s.msi, s.shading, s.seg);
    RgbImage pred = tensor_to_rgb(o.final, 8);
    out.psnr += psnr(pred, s.target8);
    out.ssim += ssim(pred, s.target8);
    out.delta_e += delta_e(pred, s.target8);
  }
  const double n = static_cast<double>(test.size());
  out.psnr /= n;
  out.ssim /= n;
  out.delta_e /= n;
  return out;
}

std::vector<EnhanceSample> apply_msi_window(const std::vector<EnhanceSample>& samples,
                                            double lo, double hi) {
  std::vector<EnhanceSample> out = samples;
  for (auto& s : out) s.msi = filter_msi_window(s.msi, lo, hi);
  return out;
}

}  // namespace

AblationTable run_ablation(const RunConfig& config, const std::string& axis,
                           const std::vector<std::string>& values) {
  AblationTable table;
  table.axis = axis;

  // shared benchmark: scenes are a pure function of (seed, index)
  std::vector<int> train_idx, test_idx;
  split_80_20(config.scenes, config.seed, train_idx, test_idx);

  auto build_samples = [&](const SyntheticOptions& opts) {
    std::vector<EnhanceSample> all;
    for (int i = 0; i < config.scenes; ++i) {
      all.push_back(to_enhance_sample(make_scene_bundle(config.seed * 1000 + i, opts)));
    }
    std::vector<EnhanceSample> train, test;
    for (int i : train_idx) train.push_back(all[static_cast<std::size_t>(i)]);
    for (int i : test_idx) test.push_back(all[static_cast<std::size_t>(i)]);
    return std::make_pair(train, test);
  };

  auto run_one = [&](const std::string& label, const RunConfig& rc,
                     const std::vector<EnhanceSample>& train,
                     const std::vector<EnhanceSample>& test) {
    EnhanceNet net = train_enhancement(train, rc.enhance_config());
    EvalBundle ev = evaluate_net(net, test);
    table.rows.push_back({label, ev.psnr, ev.ssim, ev.delta_e});
  };

  if (axis == "priors") {
    auto [train, test] = build_samples(config.synthetic_options());
    struct Setting {
      const char* label;
      bool s, r, m;
    };
    const Setting settings[4] = {{"baseline", false, false, false},
                                 {"+S", true, false, false},
                                 {"+S+R", true, true, false},
                                 {"+S+R+M", true, true, true}};
    for (const auto& st : settings) {
      RunConfig rc = config;
      rc.use_s = st.s;
      rc.use_r = st.r;
      rc.use_m = st.m;
      run_one(st.label, rc, train, test);
    }
  } else if (axis == "spatial") {
    std::vector<int> sizes;
    if (values.empty()) sizes = {1, 4, 16};
    else
      for (const auto& v : values) sizes.push_back(std::stoi(v));
    for (int hw : sizes) {
      RunConfig rc = config;
      rc.msi_hw = hw;
      SyntheticOptions opts = rc.synthetic_options();
      auto [train, test] = build_samples(opts);
      run_one(std::to_string(hw) + "x" + std::to_string(hw), rc, train, test);
    }
  } else if (axis == "experts") {
    auto [train, test] = build_samples(config.synthetic_options());
    std::vector<int> counts;
    if (values.empty()) counts = {1, 2, 4, 6};
    else
      for (const auto& v : values) counts.push_back(std::stoi(v));
    for (int n : counts) {
      RunConfig rc = config;
      rc.n_experts = n;
      run_one(std::to_string(n), rc, train, test);
    }
  } else if (axis == "spectral") {
    auto [train, test] = build_samples(config.synthetic_options());
    std::vector<std::pair<double, double>> windows;
    if (values.empty()) {
      windows = {{400, 520}, {520, 640}, {640, 760}, {400, 760}, {760, 1000}, {400, 1000}};
    } else {
      for (const auto& v : values) {
        const auto dash = v.find('-');
        if (dash == std::string::npos) throw ValueError("ablate: spectral values look like 400-520");
        windows.emplace_back(std::stod(v.substr(0, dash)), std::stod(v.substr(dash + 1)));
      }
    }
    for (const auto& [lo, hi] : windows) {
      RunConfig rc = config;
      rc.msi_window_lo = lo;
      rc.msi_window_hi = hi;
      auto train_w = apply_msi_window(train, lo, hi);
      auto test_w = apply_msi_window(test, lo, hi);
      rc.msi_bands = train_w[0].msi.bands();
      std::ostringstream label;
      label << lo << "-" << hi << " nm";
      run_one(label.str(), rc, train_w, test_w);
    }
  } else {
    throw ValueError("run_ablation: axis must be one of spectral|spatial|experts|priors");
  }
  return table;
}

std::string AblationTable::to_json() const {
  nlohmann::json j;
  j["axis"] = axis;
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"setting", r.setting},
                         {"psnr", r.psnr},
                         {"ssim", r.ssim},
                         {"delta_e", r.delta_e}});
  }
  j["rows"] = rows_json;
  return j.dump(2);
}

std::string AblationTable::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(14) << "setting" << std::right << std::setw(10) << "PSNR"
     << std::setw(10) << "SSIM" << std::setw(10) << "dE" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << r.setting << std::right << std::fixed
       << std::setprecision(3) << std::setw(10) << r.psnr << std::setw(10) << r.ssim
       << std::setw(10) << r.delta_e << "\n";
  }
  return os.str();
}

}  // namespace jdm
