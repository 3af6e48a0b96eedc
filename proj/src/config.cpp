// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/config.hpp"

#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace omnistereo {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const char* where,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument(std::string("rig file: unknown field \"") +
                                  key + "\" in " + where);
  }
}

template <typename T>
T fetch(const json& obj, const char* where, const char* key) {
  if (!obj.contains(key))
    throw std::invalid_argument(std::string("rig file: missing field \"") +
                                key + "\" in " + where);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("rig file: bad value for \"") +
                                key + "\" in " + where);
  }
}

FisheyeCamera parse_camera(const json& jc, int index) {
  const std::string where = "cameras[" + std::to_string(index) + "]";
  if (!jc.is_object())
    throw std::invalid_argument("rig file: " + where + " is not an object");
  reject_unknown(jc, where.c_str(),
                 {"id", "focal", "principal", "image_size", "fov_deg",
                  "rotation", "translation"});
  FisheyeCamera cam;
  cam.id = fetch<std::string>(jc, where.c_str(), "id");
  cam.focal = fetch<double>(jc, where.c_str(), "focal");
  const auto principal = fetch<std::vector<double>>(jc, where.c_str(), "principal");
  const auto size = fetch<std::vector<int>>(jc, where.c_str(), "image_size");
  cam.fov = fetch<double>(jc, where.c_str(), "fov_deg") * M_PI / 180.0;
  const auto rot = fetch<std::vector<double>>(jc, where.c_str(), "rotation");
  const auto tr = fetch<std::vector<double>>(jc, where.c_str(), "translation");
  if (principal.size() != 2)
    throw std::invalid_argument("rig file: principal must have 2 entries in " + where);
  if (size.size() != 2)
    throw std::invalid_argument("rig file: image_size must have 2 entries in " + where);
  if (rot.size() != 9)
    throw std::invalid_argument("rig file: rotation must have 9 entries in " + where);
  if (tr.size() != 3)
    throw std::invalid_argument("rig file: translation must have 3 entries in " + where);
  cam.principal = Vec2(principal[0], principal[1]);
  cam.image_height = size[0];
  cam.image_width = size[1];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[r * 3 + c];
  cam.translation = Vec3(tr[0], tr[1], tr[2]);
  return cam;
}

SweepGrid parse_grid(const json& jg) {
  if (!jg.is_object())
    throw std::invalid_argument("rig file: grid is not an object");
  reject_unknown(jg, "grid",
                 {"height", "width", "phi_min_deg", "phi_max_deg",
                  "num_spheres", "inv_depth_max", "stride"});
  SweepGrid grid;
  grid.height = fetch<int>(jg, "grid", "height");
  grid.width = fetch<int>(jg, "grid", "width");
  grid.phi_min = fetch<double>(jg, "grid", "phi_min_deg") * M_PI / 180.0;
  grid.phi_max = fetch<double>(jg, "grid", "phi_max_deg") * M_PI / 180.0;
  grid.num_spheres = fetch<int>(jg, "grid", "num_spheres");
  grid.inv_depth_max = fetch<double>(jg, "grid", "inv_depth_max");
  if (jg.contains("stride")) grid.stride = fetch<int>(jg, "grid", "stride");
  return grid;
}

}  // namespace

RigFile load_rig_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("rig file: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("rig file: parse error in " + path + ": " +
                                e.what());
  }
  if (!doc.is_object())
    throw std::invalid_argument("rig file: top level is not an object");
  reject_unknown(doc, "top level", {"cameras", "grid"});
  if (!doc.contains("cameras") || !doc.at("cameras").is_array())
    throw std::invalid_argument("rig file: missing cameras array");

  RigFile out;
  int index = 0;
  for (const auto& jc : doc.at("cameras"))
    out.rig.cameras.push_back(parse_camera(jc, index++));
  out.rig.validate();
  if (doc.contains("grid")) {
    out.grid = parse_grid(doc.at("grid"));
    out.grid->validate();
  }
  return out;
}

void save_rig_file(const std::string& path, const Rig& rig,
                   const SweepGrid* grid) {
  rig.validate();
  json doc;
  doc["cameras"] = json::array();
  for (const auto& cam : rig.cameras) {
    json jc;
    jc["id"] = cam.id;
    jc["focal"] = cam.focal;
    jc["principal"] = {cam.principal.x(), cam.principal.y()};
    jc["image_size"] = {cam.image_height, cam.image_width};
    jc["fov_deg"] = cam.fov * 180.0 / M_PI;
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot[r * 3 + c] = cam.rotation(r, c);
    jc["rotation"] = rot;
    jc["translation"] = {cam.translation.x(), cam.translation.y(),
                         cam.translation.z()};
    doc["cameras"].push_back(jc);
  }
  if (grid) {
    grid->validate();
    doc["grid"] = {{"height", grid->height},
                   {"width", grid->width},
                   {"phi_min_deg", grid->phi_min * 180.0 / M_PI},
                   {"phi_max_deg", grid->phi_max * 180.0 / M_PI},
                   {"num_spheres", grid->num_spheres},
                   {"inv_depth_max", grid->inv_depth_max},
                   {"stride", grid->stride}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("rig file: cannot write " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace omnistereo
