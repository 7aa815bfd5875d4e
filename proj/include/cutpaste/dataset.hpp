#pragma once

#include <algorithm>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cutpaste/config.hpp"
#include "cutpaste/png_io.hpp"
#include "cutpaste/scene.hpp"

namespace cutpaste {

namespace detail {

inline std::string scene_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

}  // namespace detail

// Layout:
//   scenes/<id>.png          8-bit RGB
//   masks/<id>_<k>.png       8-bit gray, values exactly 0 or 255
//   annotations.json         per-scene instance records
//   manifest.json            config echo and counts
inline nlohmann::json write_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scenes");
  fs::create_directories(fs::path(dir) / "masks");

  nlohmann::json annotations = nlohmann::json::array();
  size_t n_instances = 0;
  for (const Scene& scene : ds.scenes) {
    const std::string id = detail::scene_id(scene.index);
    const std::string image_rel = "scenes/" + id + ".png";
    write_png((fs::path(dir) / image_rel).string(), scene.image);

    nlohmann::json inst_list = nlohmann::json::array();
    for (size_t k = 0; k < scene.instances.size(); ++k) {
      const Instance& inst = scene.instances[k];
      const std::string mask_rel =
          "masks/" + id + "_" + std::to_string(k) + ".png";
      Image8 full(scene.image.h, scene.image.w, 1);
      for (int y = 0; y < inst.box.h; ++y)
        for (int x = 0; x < inst.box.w; ++x)
          if (inst.mask_at(y, x))
            full.at(inst.box.y + y, inst.box.x + x, 0) = 255;
      write_png((fs::path(dir) / mask_rel).string(), full);

      inst_list.push_back({{"id", static_cast<int>(k)},
                           {"box", {inst.box.x, inst.box.y, inst.box.w, inst.box.h}},
                           {"mask", mask_rel},
                           {"shape_kind", shape_kind_name(inst.kind)},
                           {"appearance_seed", inst.appearance_seed}});
      ++n_instances;
    }
    annotations.push_back(
        {{"id", id}, {"image", image_rel}, {"instances", inst_list}});
  }
  save_json_file((fs::path(dir) / "annotations.json").string(), annotations);

  nlohmann::json manifest = {{"n_scenes", ds.scenes.size()},
                             {"n_instances", n_instances},
                             {"config", to_json(ds.config)}};
  save_json_file((fs::path(dir) / "manifest.json").string(), manifest);
  return manifest;
}

inline Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;

  const nlohmann::json manifest =
      load_json_file((fs::path(dir) / "manifest.json").string());
  ds.config = synth_config_from_json(manifest.at("config"));

  const nlohmann::json annotations =
      load_json_file((fs::path(dir) / "annotations.json").string());
  for (const auto& rec : annotations) {
    std::string id = "?";
    try {
      id = rec.at("id").get<std::string>();
      Scene scene;
      scene.index = std::stoi(id);
      scene.image = read_png((fs::path(dir) / rec.at("image").get<std::string>()).string());
      if (scene.image.c != 3)
        throw std::runtime_error("scene image is not RGB");

      for (const auto& irec : rec.at("instances")) {
        const int k = irec.at("id").get<int>();
        const auto& jb = irec.at("box");
        if (!jb.is_array() || jb.size() != 4)
          throw std::runtime_error("instance " + std::to_string(k) +
                                   ": box must be [x,y,w,h]");
        Instance inst;
        inst.box = {jb[0].get<int>(), jb[1].get<int>(), jb[2].get<int>(),
                    jb[3].get<int>()};
        inst.kind = shape_kind_from_name(irec.at("shape_kind").get<std::string>());
        inst.appearance_seed = irec.value("appearance_seed", uint64_t{0});
        if (!inst.box.valid() || !inst.box.inside(scene.image.w, scene.image.h))
          throw std::runtime_error("instance " + std::to_string(k) +
                                   ": box outside image");

        const Image8 full =
            read_png((fs::path(dir) / irec.at("mask").get<std::string>()).string());
        if (full.c != 1 || full.h != scene.image.h || full.w != scene.image.w)
          throw std::runtime_error("instance " + std::to_string(k) +
                                   ": mask geometry mismatch");
        int x0 = full.w, y0 = full.h, x1 = -1, y1 = -1;
        for (int y = 0; y < full.h; ++y)
          for (int x = 0; x < full.w; ++x) {
            const uint8_t v = full.at(y, x, 0);
            if (v != 0 && v != 255)
              throw std::runtime_error("instance " + std::to_string(k) +
                                       ": mask value " + std::to_string(v) +
                                       " is not 0/255");
            if (v) {
              x0 = std::min(x0, x);
              y0 = std::min(y0, y);
              x1 = std::max(x1, x);
              y1 = std::max(y1, y);
            }
          }
        if (x1 < 0)
          throw std::runtime_error("instance " + std::to_string(k) + ": empty mask");
        const BoundingBox tight{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
        if (!(tight == inst.box))
          throw std::runtime_error("instance " + std::to_string(k) +
                                   ": box is not the tight bound of its mask");

        inst.mask.resize(static_cast<size_t>(inst.box.w) * inst.box.h);
        for (int y = 0; y < inst.box.h; ++y)
          for (int x = 0; x < inst.box.w; ++x)
            inst.mask[static_cast<size_t>(y) * inst.box.w + x] =
                full.at(inst.box.y + y, inst.box.x + x, 0) ? 1 : 0;
        scene.instances.push_back(std::move(inst));
      }
      ds.scenes.push_back(std::move(scene));
    } catch (const std::exception& e) {
      throw std::runtime_error("read_dataset: scene " + id + ": " + e.what());
    }
  }
  std::sort(ds.scenes.begin(), ds.scenes.end(),
            [](const Scene& a, const Scene& b) { return a.index < b.index; });
  ds.rebuild_index();
  return ds;
}

}  // namespace cutpaste
