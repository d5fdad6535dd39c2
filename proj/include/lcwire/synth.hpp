#pragma once

#include "lcwire/labeling.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lcwire {

enum class RoofFamily { Flat, Gabled, Hipped, LShaped };

std::string_view to_string(RoofFamily f);
RoofFamily roof_family_from_string(std::string_view s);

/// Parameters of the procedural building generator. Dimensions are meters;
/// noise is relative to the bounding-box diagonal of the building.
struct SceneSpec {
  std::vector<RoofFamily> families{RoofFamily::Flat, RoofFamily::Gabled, RoofFamily::Hipped,
                                   RoofFamily::LShaped};
  double width_min = 6.0, width_max = 11.0;  // along the ridge
  double depth_min = 4.5, depth_max = 8.0;
  double wall_min = 2.5, wall_max = 5.0;
  double roof_min = 1.2, roof_max = 3.0;
  double noise_rel = 0.01;
  double clutter_ratio = 0.5;   // clutter segments per wireframe segment
  int fragments_min = 2, fragments_max = 8;
  double duplicate_ratio = 0.3; // chance that a fragment gets an off-line copy
  int num_cameras = 0;
  double clutter_margin_rel = 0.075;  // clutter stays this far (relative) from every GT line

  /// Throws Error naming the offending field.
  void validate() const;
};

/// Generated building with its line cloud. provenance[i] is the GT edge a
/// segment was cut from, or -1 for clutter.
struct SyntheticScene {
  RoofFamily family = RoofFamily::Flat;
  std::uint64_t seed = 0;
  SceneSpec spec;
  Mesh mesh;
  Wireframe wireframe;
  LineCloud cloud;
  std::vector<int> provenance;
  std::vector<Camera> cameras;
};

Mesh building_mesh(RoofFamily family, double width, double depth, double wall, double roof);

SyntheticScene generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed);

/// Cameras on a ring around the points, looking at their center.
std::vector<Camera> ring_cameras(const std::vector<Vec3>& points, int count);

/// Supports for every segment in every view where both endpoints project into the image.
std::vector<std::vector<Support2D>> project_supports(const LineCloud& lc, const std::vector<Camera>& cams);

}  // namespace lcwire
