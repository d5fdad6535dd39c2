#pragma once

#include "lcwire/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lcwire {

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Text with 9 significant digits, the precision used by every writer.
std::string format_real(double v);

// Line clouds: plain rows "px py pz qx qy qz [f i1 d1 i2 d2]" or an OBJ
// subset with `v` records and two-index `l` records.
LineCloud parse_line_cloud(std::istream& in, const std::string& source = "<stream>");
LineCloud read_line_cloud(const std::filesystem::path& path);
void write_line_cloud(std::ostream& out, const LineCloud& lc);
void write_line_cloud(const LineCloud& lc, const std::filesystem::path& path);

// Support sidecar: one row "segment view ax ay bx by" per support.
std::vector<std::vector<Support2D>> parse_supports(std::istream& in, std::size_t num_segments,
                                                   const std::string& source = "<stream>");
std::vector<std::vector<Support2D>> read_supports(const std::filesystem::path& path,
                                                  std::size_t num_segments);
void write_supports(std::ostream& out, const std::vector<std::vector<Support2D>>& supports);
void write_supports(const std::vector<std::vector<Support2D>>& supports,
                    const std::filesystem::path& path);

// Wireframes as OBJ `v` / `l` with 1-based indices.
Wireframe parse_wireframe(std::istream& in, const std::string& source = "<stream>");
Wireframe read_wireframe(const std::filesystem::path& path);
void write_wireframe(std::ostream& out, const Wireframe& wf);
void write_wireframe(const Wireframe& wf, const std::filesystem::path& path);

// Cameras as JSON: {"cameras": [{"K": [9], "R": [9], "t": [3], "width": w, "height": h}]}
std::vector<Camera> parse_cameras(const std::string& text, const std::string& source = "<string>");
std::vector<Camera> read_cameras(const std::filesystem::path& path);
std::string format_cameras(const std::vector<Camera>& cams);
void write_cameras(const std::vector<Camera>& cams, const std::filesystem::path& path);

/// Raw tensor archive. Values are stored as little-endian float64.
struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> values;

  std::int64_t numel() const;
};

struct WeightsFile {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::string metadata;  // JSON text
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

class WeightsError : public Error {
 public:
  enum class Kind { Format, Missing, Extra, Shape };
  WeightsError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

WeightsFile parse_weights(const std::string& bytes, const std::string& source = "<bytes>");
std::string serialize_weights(const WeightsFile& wf);
WeightsFile read_weights_file(const std::filesystem::path& path);
void write_weights_file(const WeightsFile& wf, const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace lcwire
