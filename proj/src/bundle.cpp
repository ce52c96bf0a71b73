#include "hmjnd/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>

#include "hmjnd/rng.hpp"

namespace fs = std::filesystem;

namespace hmjnd {

namespace {

void check_dims(const ImagePlane& ref, const ImagePlane& p, const std::string& name) {
  if (!ref.same_dims(p))
    throw std::runtime_error("dimension mismatch: plane '" + name + "' is " +
                             std::to_string(p.width) + "x" + std::to_string(p.height) +
                             " but rgb is " + std::to_string(ref.width) + "x" +
                             std::to_string(ref.height));
}

ImagePlane load_required(const fs::path& dir, const std::string& file, const std::string& modality) {
  const fs::path p = dir / file;
  if (!fs::exists(p)) throw std::runtime_error("missing modality: " + modality);
  return load_image(p.string());
}

}  // namespace

ModalityBundle load_bundle(const std::string& dir) {
  const fs::path d(dir);
  if (!fs::is_directory(d)) throw std::runtime_error("not a bundle directory: " + dir);
  ModalityBundle b;
  b.rgb = load_required(d, "rgb.ppm", "rgb");
  b.saliency = load_required(d, "saliency.pgm", "saliency");
  b.depth = load_required(d, "depth.pgm", "depth");
  b.segmentation = load_required(d, "segmentation.pgm", "segmentation");
  check_dims(b.rgb, b.saliency, "saliency");
  check_dims(b.rgb, b.depth, "depth");
  check_dims(b.rgb, b.segmentation, "segmentation");
  if (fs::exists(d / "gt.ppm")) {
    b.ground_truth = load_image((d / "gt.ppm").string());
    check_dims(b.rgb, b.ground_truth, "gt");
  }

  // Recover class indices from the distinct byte levels of the plane.
  std::set<int> levels;
  for (double v : b.segmentation.data)
    levels.insert(static_cast<int>(std::floor(v * 255.0 + 0.5)));
  if (levels.size() > 32)
    throw std::runtime_error("segmentation has " + std::to_string(levels.size()) +
                             " distinct levels; the label set must be <= 32");
  std::map<int, std::uint8_t> rank;
  std::uint8_t next = 0;
  for (int lv : levels) rank[lv] = next++;
  b.num_classes = static_cast<int>(levels.size());
  b.seg_labels.resize(b.segmentation.data.size());
  for (std::size_t i = 0; i < b.segmentation.data.size(); ++i)
    b.seg_labels[i] = rank[static_cast<int>(std::floor(b.segmentation.data[i] * 255.0 + 0.5))];
  return b;
}

void save_bundle(const ModalityBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path d(dir);
  save_image(bundle.rgb, (d / "rgb.ppm").string());
  save_image(bundle.saliency, (d / "saliency.pgm").string());
  save_image(bundle.depth, (d / "depth.pgm").string());
  save_image(bundle.segmentation, (d / "segmentation.pgm").string());
  if (bundle.has_ground_truth()) save_image(bundle.ground_truth, (d / "gt.ppm").string());
}

// ---------------------------------------------------------------------------
// synthetic scenes
// ---------------------------------------------------------------------------

namespace {

struct SceneObject {
  bool ellipse;
  double cx, cy, rx, ry;  // pixels
  double color[3];
  int texture;            // 0 flat, 1 sine grid, 2 checker, 3 value noise
  double amp, freq;
  std::uint64_t noise_key;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return ellipse ? (dx * dx + dy * dy <= 1.0) : (std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0);
  }
};

double texture_pattern(const SceneObject& o, int x, int y) {
  switch (o.texture) {
    case 1:
      return std::sin(x * o.freq) * std::sin(y * o.freq);
    case 2:
      return (static_cast<int>(std::floor(x * o.freq / 3.0)) +
              static_cast<int>(std::floor(y * o.freq / 3.0))) % 2 == 0
                 ? 1.0
                 : -1.0;
    case 3: {
      // hash-based value noise, a pure function of (noise_key, pixel)
      const std::uint64_t h =
          derive_seed(o.noise_key, (static_cast<std::uint64_t>(x) << 24) ^
                                       static_cast<std::uint64_t>(y));
      return (static_cast<double>(h >> 11) * 0x1.0p-53) * 2.0 - 1.0;
    }
    default:
      return 0.0;
  }
}

ImagePlane box_blur3(const ImagePlane& p) {
  ImagePlane out = ImagePlane::make(p.width, p.height, p.channels);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x)
      for (int c = 0; c < p.channels; ++c) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = std::clamp(y + dy, 0, p.height - 1);
            const int xx = std::clamp(x + dx, 0, p.width - 1);
            s += p.at(xx, yy, c);
          }
        out.at(x, y, c) = s / 9.0;
      }
  return out;
}

}  // namespace

ModalityBundle synth_bundle(std::uint64_t seed, int w, int h, SynthInfo* info) {
  if (w < 16 || h < 16) throw std::invalid_argument("synth_bundle: size must be >= 16x16");
  Rng rng(derive_seed(seed, 0x5ce));

  const int nobj = rng.uniform_int(3, 6);
  std::vector<SceneObject> objs;
  for (int i = 0; i < nobj; ++i) {
    SceneObject o;
    o.ellipse = rng.uniform01() < 0.5;
    o.cx = rng.uniform(0.15, 0.85) * w;
    o.cy = rng.uniform(0.15, 0.85) * h;
    o.rx = rng.uniform(0.10, 0.22) * w;
    o.ry = rng.uniform(0.10, 0.22) * h;
    for (double& c : o.color) c = rng.uniform(0.15, 0.85);
    // roughly half the objects carry texture
    o.texture = rng.uniform01() < 0.55 ? rng.uniform_int(1, 3) : 0;
    o.amp = o.texture ? rng.uniform(0.08, 0.18) : 0.0;
    o.freq = rng.uniform(0.5, 1.4);
    o.noise_key = rng.next_u64();
    objs.push_back(o);
  }

  // background gradient
  double base[3], gdir[2], gamp;
  for (double& c : base) c = rng.uniform(0.30, 0.70);
  {
    const double th = rng.uniform(0.0, 6.28318530717958648);
    gdir[0] = std::cos(th);
    gdir[1] = std::sin(th);
    gamp = rng.uniform(0.08, 0.16);
  }

  // depth ramp direction + per-object offsets; gains for the ground truth
  const double dth = rng.uniform(0.0, 6.28318530717958648);
  const double ddir[2] = {std::cos(dth), std::sin(dth)};
  std::vector<double> depth_off(nobj), label_gain(nobj + 1);
  for (double& v : depth_off) v = rng.uniform(-0.20, 0.20);
  // per-class removal gains, deliberately independent of object color
  for (double& v : label_gain) v = rng.uniform(0.25, 1.0);
  const int salient = rng.uniform_int(0, nobj - 1);

  ModalityBundle b;
  b.rgb = ImagePlane::make(w, h, 3);
  b.saliency = ImagePlane::make(w, h, 1);
  b.depth = ImagePlane::make(w, h, 1);
  b.segmentation = ImagePlane::make(w, h, 1);
  b.seg_labels.assign(static_cast<std::size_t>(w) * h, 0);
  b.num_classes = nobj + 1;

  std::vector<double> tex_energy(static_cast<std::size_t>(w) * h, 0.0);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
      int label = 0;
      int top = -1;
      for (int i = 0; i < nobj; ++i)
        if (objs[i].contains(x, y)) top = i;  // later objects paint over
      double t_e = 0.0;
      if (top >= 0) {
        label = top + 1;
        const SceneObject& o = objs[top];
        const double pat = texture_pattern(o, x, y);
        t_e = o.amp * std::fabs(pat);
        for (int c = 0; c < 3; ++c)
          b.rgb.at(x, y, c) = std::clamp(o.color[c] + o.amp * pat, 0.02, 0.98);
      } else {
        const double g = gamp * ((u - 0.5) * gdir[0] + (v - 0.5) * gdir[1]);
        const double ripple = 0.03 * std::sin(6.0 * u + 4.0 * v);
        for (int c = 0; c < 3; ++c)
          b.rgb.at(x, y, c) = std::clamp(base[c] + g + ripple, 0.02, 0.98);
      }
      tex_energy[static_cast<std::size_t>(y) * w + x] = t_e;
      b.seg_labels[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(label);
      b.segmentation.at(x, y) = static_cast<double>(label) / (b.num_classes - 1);

      double dep = 0.5 + 0.45 * ((u - 0.5) * ddir[0] + (v - 0.5) * ddir[1]) * 2.0;
      if (top >= 0) dep += depth_off[top];
      b.depth.at(x, y) = std::clamp(dep, 0.0, 1.0);

      const double sx = (x - objs[salient].cx) / (1.2 * objs[salient].rx);
      const double sy = (y - objs[salient].cy) / (1.2 * objs[salient].ry);
      b.saliency.at(x, y) = std::exp(-(sx * sx + sy * sy));
    }

  // Ground truth: strip the blur-residual detail, scaled by texture energy
  // and the per-modality gains. Textured pixels move, flat ones barely do.
  const ImagePlane smooth = box_blur3(b.rgb);
  b.ground_truth = ImagePlane::make(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int label = b.seg_labels[i];
      const double g_dep = 0.55 + 0.45 * b.depth.at(x, y);
      const double g_sal = 1.0 - 0.6 * b.saliency.at(x, y);
      const double rho = std::clamp(label_gain[label] * g_dep * g_sal, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double detail = b.rgb.at(x, y, c) - smooth.at(x, y, c);
        b.ground_truth.at(x, y, c) = std::clamp(b.rgb.at(x, y, c) - detail * rho, 0.0, 1.0);
      }
    }

  if (info) {
    info->texture_energy = tex_energy;
    info->textured_mask.assign(tex_energy.size(), 0);
    for (std::size_t i = 0; i < tex_energy.size(); ++i)
      info->textured_mask[i] = tex_energy[i] > 1e-9 ? 1 : 0;
  }
  return b;
}

ModalityBundle apply_modality_ablation(const ModalityBundle& b, bool use_saliency,
                                       bool use_depth, bool use_segmentation,
                                       const std::string& substitute) {
  ModalityBundle out = b;
  const ImagePlane* sub = nullptr;
  if (use_saliency && substitute == "saliency") sub = &b.saliency;
  else if (use_depth && substitute == "depth") sub = &b.depth;
  else if (use_segmentation && substitute == "segmentation") sub = &b.segmentation;
  if (!sub) {
    // fall back to any enabled modality, then to RGB luma
    if (use_saliency) sub = &b.saliency;
    else if (use_depth) sub = &b.depth;
    else if (use_segmentation) sub = &b.segmentation;
  }
  ImagePlane luma;
  if (!sub) {
    luma = luma_of(b.rgb);
    sub = &luma;
  }
  if (!use_saliency) out.saliency = *sub;
  if (!use_depth) out.depth = *sub;
  if (!use_segmentation) out.segmentation = *sub;
  return out;
}

}  // namespace hmjnd
