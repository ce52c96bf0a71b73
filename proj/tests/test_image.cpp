#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "hmjnd/bundle.hpp"
#include "hmjnd/image.hpp"
#include "test_util.hpp"

using namespace hmjnd;
using test::TempDir;

TEST_CASE("pgm load: direct scaling of bytes") {
  TempDir td("pgm");
  const std::string path = td.str("a.pgm");
  std::ofstream f(path, std::ios::binary);
  f << "P5\n2 2\n255\n";
  const unsigned char bytes[4] = {0, 255, 128, 64};
  f.write(reinterpret_cast<const char*>(bytes), 4);
  f.close();

  ImagePlane p = load_image(path);
  CHECK(p.width == 2);
  CHECK(p.height == 2);
  CHECK(p.channels == 1);
  CHECK(p.data[0] == 0.0);
  CHECK(p.data[1] == 1.0);
  CHECK(p.data[2] == doctest::Approx(128.0 / 255.0));
  CHECK(p.data[3] == doctest::Approx(64.0 / 255.0));
}

TEST_CASE("ppm load: single red pixel") {
  TempDir td("ppm");
  const std::string path = td.str("r.ppm");
  std::ofstream f(path, std::ios::binary);
  f << "P6\n1 1\n255\n";
  const unsigned char bytes[3] = {255, 0, 0};
  f.write(reinterpret_cast<const char*>(bytes), 3);
  f.close();
  ImagePlane p = load_image(path);
  CHECK(p.channels == 3);
  CHECK(p.at(0, 0, 0) == 1.0);
  CHECK(p.at(0, 0, 1) == 0.0);
  CHECK(p.at(0, 0, 2) == 0.0);
}

TEST_CASE("malformed images report the byte offset") {
  TempDir td("bad");
  {
    std::ofstream f(td.str("trunc.pgm"), std::ios::binary);
    f << "P5\n4 4\n255\n";
    f << "xy";  // 2 of 16 payload bytes
  }
  CHECK_THROWS_WITH_AS(load_image(td.str("trunc.pgm")),
                       doctest::Contains("at byte"), std::runtime_error);
  {
    std::ofstream f(td.str("magic.pgm"), std::ios::binary);
    f << "P2\n1 1\n255\n0";
  }
  CHECK_THROWS_AS(load_image(td.str("magic.pgm")), std::runtime_error);
  CHECK_THROWS_AS(load_image(td.str("missing.pgm")), std::runtime_error);
}

TEST_CASE("save quantizes round-half-up and round trips byte-exactly") {
  TempDir td("rt");
  ImagePlane p = ImagePlane::make(3, 1, 1);
  p.data = {0.5, 1.0, 0.25};
  save_image(p, td.str("q.pgm"));
  ImagePlane q = load_image(td.str("q.pgm"));
  CHECK(q.data[0] == doctest::Approx(128.0 / 255.0));  // 0.5*255=127.5 -> 128
  CHECK(q.data[1] == 1.0);
  CHECK(q.data[2] == doctest::Approx(64.0 / 255.0));

  // save-load-save: second file byte-identical to the first
  save_image(q, td.str("q2.pgm"));
  std::ifstream f1(td.str("q.pgm"), std::ios::binary), f2(td.str("q2.pgm"), std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("bundle io: complete, missing and mismatched") {
  TempDir td("bundle");
  ModalityBundle b = synth_bundle(7, 32, 24);
  save_bundle(b, td.str("scene"));
  ModalityBundle r = load_bundle(td.str("scene"));
  CHECK(r.width() == 32);
  CHECK(r.height() == 24);
  CHECK(r.has_ground_truth());
  CHECK(r.num_classes == b.num_classes);
  // quantization round trip stays within one 8-bit step
  for (std::size_t i = 0; i < b.rgb.data.size(); ++i)
    CHECK(std::fabs(r.rgb.data[i] - b.rgb.data[i]) <= 1.0 / 255.0 + 1e-12);
  for (std::size_t i = 0; i < b.seg_labels.size(); ++i)
    CHECK(r.seg_labels[i] == b.seg_labels[i]);

  std::remove((td.path() / "scene" / "depth.pgm").string().c_str());
  CHECK_THROWS_WITH_AS(load_bundle(td.str("scene")), doctest::Contains("missing modality: depth"),
                       std::runtime_error);

  // dimension mismatch names the offending plane
  TempDir td2("bundle2");
  save_bundle(b, td2.str("scene"));
  ImagePlane small = ImagePlane::make(8, 8, 1, 0.5);
  save_image(small, (td2.path() / "scene" / "depth.pgm").string());
  CHECK_THROWS_WITH_AS(load_bundle(td2.str("scene")), doctest::Contains("depth"),
                       std::runtime_error);
}

TEST_CASE("synth bundle: deterministic, labeled, texture-correlated gt") {
  SynthInfo info;
  ModalityBundle a = synth_bundle(1, 32, 32, &info);
  ModalityBundle b = synth_bundle(1, 32, 32);
  CHECK(a.rgb.data == b.rgb.data);
  CHECK(a.depth.data == b.depth.data);
  CHECK(a.saliency.data == b.saliency.data);
  CHECK(a.segmentation.data == b.segmentation.data);
  CHECK(a.ground_truth.data == b.ground_truth.data);

  ModalityBundle c = synth_bundle(2, 32, 32);
  CHECK(a.rgb.data != c.rgb.data);

  // all planes sized and in range, >= 2 labels present
  CHECK(a.num_classes >= 2);
  int max_label = 0;
  for (auto l : a.seg_labels) max_label = std::max<int>(max_label, l);
  CHECK(max_label >= 1);
  for (double v : a.rgb.data) CHECK((v >= 0.0 && v <= 1.0));
  for (double v : a.depth.data) CHECK((v >= 0.0 && v <= 1.0));

  // gt deviates more on textured pixels than on flat ones
  double flat_sum = 0, tex_sum = 0;
  long flat_n = 0, tex_n = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      double d = 0;
      for (int ch = 0; ch < 3; ++ch)
        d += std::fabs(a.ground_truth.at(x, y, ch) - a.rgb.at(x, y, ch));
      if (info.textured_mask[y * 32 + x]) {
        tex_sum += d;
        ++tex_n;
      } else {
        flat_sum += d;
        ++flat_n;
      }
    }
  REQUIRE(tex_n > 0);
  REQUIRE(flat_n > 0);
  CHECK(flat_sum / flat_n < tex_sum / tex_n);

  CHECK_THROWS_AS(synth_bundle(1, 8, 8), std::invalid_argument);
}

TEST_CASE("modality ablation substitutes planes") {
  ModalityBundle b = synth_bundle(3, 32, 32);
  ModalityBundle only_sa = apply_modality_ablation(b, true, false, false);
  CHECK(only_sa.depth.data == b.saliency.data);
  CHECK(only_sa.segmentation.data == b.saliency.data);
  CHECK(only_sa.saliency.data == b.saliency.data);

  ModalityBundle only_de = apply_modality_ablation(b, false, true, false, "saliency");
  CHECK(only_de.saliency.data == b.depth.data);  // falls back to the enabled plane

  ModalityBundle none = apply_modality_ablation(b, false, false, false);
  const ImagePlane luma = luma_of(b.rgb);
  CHECK(none.saliency.data == luma.data);
  CHECK(none.depth.data == luma.data);
  CHECK(none.segmentation.data == luma.data);
}

TEST_CASE("plane/tensor round trip") {
  ModalityBundle b = synth_bundle(5, 16, 16);
  Tensor t = plane_to_tensor(b.rgb);
  CHECK(t.shape() == Shape{1, 3, 16, 16});
  ImagePlane back = tensor_to_plane(t);
  CHECK(back.data == b.rgb.data);
}
