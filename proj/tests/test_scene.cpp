#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cutpaste/dataset.hpp"
#include "cutpaste/scene.hpp"

using namespace cutpaste;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.image_size = 96;
  cfg.min_instances = 1;
  cfg.max_instances = 3;
  cfg.min_scale = 0.15f;
  cfg.max_scale = 0.28f;
  cfg.n_scenes = 4;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("scene generation is deterministic in (seed, index)") {
  SynthConfig cfg = small_config();
  Scene a = generate_scene(cfg, 3);
  Scene b = generate_scene(cfg, 3);
  REQUIRE(a == b);
  Scene c = generate_scene(cfg, 4);
  REQUIRE_FALSE(a == c);
}

TEST_CASE("ellipse instances fill ~pi/4 of their tight box") {
  SynthConfig cfg = small_config();
  cfg.w_ellipse = 1.f;
  cfg.w_blob = cfg.w_rectangle = cfg.w_polygon = 0.f;
  cfg.n_scenes = 40;
  double ratio_sum = 0.0;
  int n = 0;
  for (int i = 0; i < cfg.n_scenes; ++i) {
    Scene s = generate_scene(cfg, i);
    for (const Instance& inst : s.instances) {
      ratio_sum += double(inst.mask_area()) / (inst.box.w * inst.box.h);
      ++n;
    }
  }
  REQUIRE(n > 20);
  REQUIRE(ratio_sum / n == Catch::Approx(3.14159265 / 4).margin(0.03));
}

TEST_CASE("instance counts stay within the configured range") {
  SynthConfig cfg = small_config();
  cfg.n_scenes = 1000;
  cfg.min_instances = 2;
  cfg.max_instances = 5;
  for (int i = 0; i < cfg.n_scenes; ++i) {
    Scene s = generate_scene(cfg, i);
    REQUIRE(static_cast<int>(s.instances.size()) >= cfg.min_instances);
    REQUIRE(static_cast<int>(s.instances.size()) <= cfg.max_instances);
  }
}

TEST_CASE("tight_bbox matches a brute-force scan") {
  Tensor single({8, 10});
  single.at2(3, 5) = 1.f;
  BoundingBox b = tight_bbox(single);
  REQUIRE(b == BoundingBox{5, 3, 1, 1});

  Tensor full({6, 7}, 1.f);
  REQUIRE(tight_bbox(full) == BoundingBox{0, 0, 7, 6});

  Rng rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor blob({20, 20});
    int set = 0;
    for (float& v : blob.values())
      if (rng.uniform() < 0.15f) {
        v = 1.f;
        ++set;
      }
    if (!set) continue;
    int x0 = 20, y0 = 20, x1 = -1, y1 = -1;
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x)
        if (blob.at2(y, x) > 0.5f) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    REQUIRE(tight_bbox(blob) == BoundingBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1});
  }

  REQUIRE_THROWS_AS(tight_bbox(Tensor({4, 4})), std::invalid_argument);
}

TEST_CASE("generated instances satisfy the box and disjointness invariants") {
  SynthConfig cfg = small_config();
  cfg.max_instances = 6;
  cfg.image_size = 128;
  cfg.w_polygon = 0.3f;
  cfg.w_rectangle = 0.2f;
  for (int i = 0; i < 30; ++i) {
    Scene s = generate_scene(cfg, i);
    Tensor occupancy({s.image.h, s.image.w});
    for (size_t k = 0; k < s.instances.size(); ++k) {
      const Instance& inst = s.instances[k];
      // box is the tight bound of the stored mask
      Tensor full = instance_mask_full(s, static_cast<int>(k));
      REQUIRE(tight_bbox(full) == inst.box);
      REQUIRE(inst.mask_area() > 0);
      for (int p = 0; p < full.size(); ++p) occupancy[p] += full[p];
      // minimum side and width cap
      REQUIRE(std::min(inst.box.w, inst.box.h) >= 14);
      REQUIRE(inst.box.w <= static_cast<int>(0.30f * cfg.image_size));
    }
    for (int p = 0; p < occupancy.size(); ++p) REQUIRE(occupancy[p] <= 1.f);
  }
}

TEST_CASE("depth-correlated scale tracks vertical position") {
  SynthConfig cfg = small_config();
  cfg.image_size = 128;
  cfg.depth_scale = true;
  cfg.max_instances = 4;
  cfg.n_scenes = 600;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  int n = 0;
  for (int i = 0; i < cfg.n_scenes && n < 1000; ++i) {
    Scene s = generate_scene(cfg, i);
    for (const Instance& inst : s.instances) {
      const double yc = inst.box.y + inst.box.h / 2.0;
      const double h = inst.box.h;
      sx += yc;
      sy += h;
      sxx += yc * yc;
      syy += h * h;
      sxy += yc * h;
      ++n;
    }
  }
  REQUIRE(n >= 1000);
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double vx = sxx / n - (sx / n) * (sx / n);
  const double vy = syy / n - (sy / n) * (sy / n);
  const double pearson = cov / std::sqrt(vx * vy);
  REQUIRE(pearson >= 0.8);
}

TEST_CASE("configs violating the size thresholds are rejected") {
  SynthConfig cfg = small_config();
  cfg.min_scale = 0.05f;  // 96*0.05 < 14 px
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.max_scale = 0.4f;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.background = "plasma";
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("dataset round trip is bit exact") {
  namespace fs = std::filesystem;
  const std::string dir =
      (fs::temp_directory_path() / "cutpaste_ds_test").string();
  fs::remove_all(dir);

  SynthConfig cfg = small_config();
  cfg.n_scenes = 10;
  Dataset ds = generate_dataset(cfg);
  nlohmann::json manifest = write_dataset(ds, dir);

  size_t want_instances = 0;
  for (const Scene& s : ds.scenes) want_instances += s.instances.size();
  REQUIRE(manifest.at("n_instances").get<size_t>() == want_instances);

  Dataset back = read_dataset(dir);
  REQUIRE(back.scenes.size() == ds.scenes.size());
  for (size_t i = 0; i < ds.scenes.size(); ++i) {
    REQUIRE(back.scenes[i].image == ds.scenes[i].image);
    REQUIRE(back.scenes[i].instances.size() == ds.scenes[i].instances.size());
    for (size_t k = 0; k < ds.scenes[i].instances.size(); ++k) {
      REQUIRE(back.scenes[i].instances[k].box == ds.scenes[i].instances[k].box);
      REQUIRE(back.scenes[i].instances[k].mask == ds.scenes[i].instances[k].mask);
      REQUIRE(back.scenes[i].instances[k].kind == ds.scenes[i].instances[k].kind);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("corrupted annotations fail with the offending instance named") {
  namespace fs = std::filesystem;
  const std::string dir =
      (fs::temp_directory_path() / "cutpaste_ds_corrupt").string();
  fs::remove_all(dir);

  SynthConfig cfg = small_config();
  cfg.n_scenes = 2;
  Dataset ds = generate_dataset(cfg);
  write_dataset(ds, dir);

  nlohmann::json ann = load_json_file(dir + "/annotations.json");
  ann[1]["instances"][0]["box"] = {1, 2, 3};  // not [x,y,w,h]
  save_json_file(dir + "/annotations.json", ann);

  try {
    read_dataset(dir);
    FAIL("expected a parse error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("000001") != std::string::npos);
    REQUIRE(msg.find("instance 0") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("mask/box inconsistency is a validation error") {
  namespace fs = std::filesystem;
  const std::string dir =
      (fs::temp_directory_path() / "cutpaste_ds_invalid").string();
  fs::remove_all(dir);

  SynthConfig cfg = small_config();
  cfg.n_scenes = 1;
  Dataset ds = generate_dataset(cfg);
  write_dataset(ds, dir);

  nlohmann::json ann = load_json_file(dir + "/annotations.json");
  auto& box = ann[0]["instances"][0]["box"];
  box[0] = box[0].get<int>() + 1;  // box no longer tight
  save_json_file(dir + "/annotations.json", ann);

  REQUIRE_THROWS_WITH(read_dataset(dir),
                      Catch::Matchers::ContainsSubstring("tight"));
  fs::remove_all(dir);
}
