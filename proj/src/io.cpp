#include "lcwire/io.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <set>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lcwire {
namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool to_real(std::string_view tok, double& v) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  return ec == std::errc() && ptr == tok.data() + tok.size() && std::isfinite(v);
}

bool to_int(std::string_view tok, long long& v) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

bool is_blank_or_comment(const std::vector<std::string_view>& toks) {
  return toks.empty() || toks.front().front() == '#';
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

Vec3 parse_vertex(const std::vector<std::string_view>& toks, const std::string& source,
                  std::size_t line) {
  // `v x y z [w]`
  if (toks.size() != 4 && toks.size() != 5) throw ParseError(source, line, "vertex needs 3 coordinates");
  Vec3 v;
  for (int k = 0; k < 3; ++k)
    if (!to_real(toks[1 + k], v[k])) throw ParseError(source, line, "bad vertex coordinate");
  return v;
}

int parse_obj_index(std::string_view tok, std::size_t count, const std::string& source,
                    std::size_t line) {
  // Accept "i" and "i/vt" forms; negative indices are relative to the end.
  tok = tok.substr(0, tok.find('/'));
  long long idx = 0;
  if (!to_int(tok, idx) || idx == 0) throw ParseError(source, line, "bad index");
  if (idx < 0) idx += static_cast<long long>(count) + 1;
  if (idx < 1 || idx > static_cast<long long>(count))
    throw ParseError(source, line, "dangling index " + std::string(tok));
  return static_cast<int>(idx - 1);
}

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// line clouds

LineCloud parse_line_cloud(std::istream& in, const std::string& source) {
  std::vector<std::string> lines;
  for (std::string s; std::getline(in, s);) lines.push_back(std::move(s));

  bool obj = false;
  for (const auto& s : lines) {
    const auto toks = split_ws(s);
    if (is_blank_or_comment(toks)) continue;
    if (toks.front() == "v" || toks.front() == "l") {
      obj = true;
      break;
    }
  }

  LineCloud lc;
  auto check_segment = [&](const LineSegment& seg, std::size_t line) {
    if (!(seg.length() >= 1e-12)) throw ParseError(source, line, "degenerate segment");
  };

  if (obj) {
    std::vector<Vec3> verts;
    std::vector<std::pair<std::size_t, std::vector<std::string_view>>> records;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto toks = split_ws(lines[i]);
      if (is_blank_or_comment(toks)) continue;
      if (toks.front() == "v") {
        verts.push_back(parse_vertex(toks, source, i + 1));
      } else if (toks.front() == "l") {
        records.emplace_back(i + 1, toks);
      }
      // Other OBJ records (vn, vt, f, o, g, ...) carry no line segments.
    }
    for (const auto& [line, toks] : records) {
      if (toks.size() != 3) throw ParseError(source, line, "`l` record must have exactly 2 indices");
      LineSegment seg{verts[parse_obj_index(toks[1], verts.size(), source, line)],
                      verts[parse_obj_index(toks[2], verts.size(), source, line)]};
      check_segment(seg, line);
      lc.segments.push_back(seg);
    }
    return lc;
  }

  std::vector<LineLabel> labels;
  bool any_label = false, any_unlabeled = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto toks = split_ws(lines[i]);
    if (is_blank_or_comment(toks)) continue;
    if (toks.size() != 6 && toks.size() != 11)
      throw ParseError(source, i + 1, "malformed row: expected 6 or 11 fields, got " +
                                          std::to_string(toks.size()));
    double v[6];
    for (int k = 0; k < 6; ++k)
      if (!to_real(toks[k], v[k])) throw ParseError(source, i + 1, "malformed row: bad coordinate");
    LineSegment seg{Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
    check_segment(seg, i + 1);
    lc.segments.push_back(seg);

    LineLabel lab;
    if (toks.size() == 11) {
      any_label = true;
      long long f = 0, i1 = 0, i2 = 0;
      if (!to_int(toks[6], f) || (f != 0 && f != 1) || !to_int(toks[7], i1) ||
          !to_real(toks[8], lab.d1) || !to_int(toks[9], i2) || !to_real(toks[10], lab.d2))
        throw ParseError(source, i + 1, "malformed label fields");
      lab.positive = f == 1;
      if (lab.positive) {
        if (i1 < 0 || i2 < 0 || i1 == i2 || lab.d1 < 0 || lab.d2 < 0 || i1 > INT32_MAX ||
            i2 > INT32_MAX)
          throw ParseError(source, i + 1, "invalid positive label");
        lab.i1 = static_cast<int>(i1);
        lab.i2 = static_cast<int>(i2);
      } else {
        lab = LineLabel{};
      }
    } else {
      any_unlabeled = true;
    }
    labels.push_back(lab);
  }
  if (any_label && any_unlabeled)
    throw ParseError(source, 0, "mixed labeled and unlabeled rows");
  if (any_label) lc.labels = std::move(labels);
  return lc;
}

LineCloud read_line_cloud(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_line_cloud(in, path.string());
}

void write_line_cloud(std::ostream& out, const LineCloud& lc) {
  lc.check_parallel();
  out << "# line cloud: " << lc.size() << " segments"
      << (lc.labels ? " (px py pz qx qy qz f i1 d1 i2 d2)" : " (px py pz qx qy qz)") << "\n";
  for (std::size_t i = 0; i < lc.size(); ++i) {
    const auto& s = lc.segments[i];
    out << format_real(s.p.x()) << ' ' << format_real(s.p.y()) << ' ' << format_real(s.p.z()) << ' '
        << format_real(s.q.x()) << ' ' << format_real(s.q.y()) << ' ' << format_real(s.q.z());
    if (lc.labels) {
      const auto& l = (*lc.labels)[i];
      if (l.positive)
        out << " 1 " << l.i1 << ' ' << format_real(l.d1) << ' ' << l.i2 << ' ' << format_real(l.d2);
      else
        out << " 0 -1 0 -1 0";
    }
    out << '\n';
  }
}

void write_line_cloud(const LineCloud& lc, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_line_cloud(out, lc);
}

// ---------------------------------------------------------------------------
// supports

std::vector<std::vector<Support2D>> parse_supports(std::istream& in, std::size_t num_segments,
                                                   const std::string& source) {
  std::vector<std::vector<Support2D>> out(num_segments);
  std::size_t line = 0;
  for (std::string s; std::getline(in, s);) {
    ++line;
    const auto toks = split_ws(s);
    if (is_blank_or_comment(toks)) continue;
    if (toks.size() != 6) throw ParseError(source, line, "support row needs 6 fields");
    long long seg = 0, view = 0;
    double v[4];
    if (!to_int(toks[0], seg) || !to_int(toks[1], view))
      throw ParseError(source, line, "bad segment or view index");
    for (int k = 0; k < 4; ++k)
      if (!to_real(toks[2 + k], v[k])) throw ParseError(source, line, "bad pixel coordinate");
    if (seg < 0 || seg >= static_cast<long long>(num_segments))
      throw ParseError(source, line, "segment index out of range");
    if (view < 0 || view > INT32_MAX) throw ParseError(source, line, "view index out of range");
    Support2D sup{static_cast<int>(view), Vec2(v[0], v[1]), Vec2(v[2], v[3])};
    if ((sup.a - sup.b).norm() <= 0) throw ParseError(source, line, "degenerate 2D support");
    out[seg].push_back(sup);
  }
  return out;
}

std::vector<std::vector<Support2D>> read_supports(const std::filesystem::path& path,
                                                  std::size_t num_segments) {
  auto in = open_in(path);
  return parse_supports(in, num_segments, path.string());
}

void write_supports(std::ostream& out, const std::vector<std::vector<Support2D>>& supports) {
  out << "# supports: segment view ax ay bx by\n";
  for (std::size_t i = 0; i < supports.size(); ++i)
    for (const auto& s : supports[i])
      out << i << ' ' << s.view << ' ' << format_real(s.a.x()) << ' ' << format_real(s.a.y()) << ' '
          << format_real(s.b.x()) << ' ' << format_real(s.b.y()) << '\n';
}

void write_supports(const std::vector<std::vector<Support2D>>& supports,
                    const std::filesystem::path& path) {
  auto out = open_out(path);
  write_supports(out, supports);
}

// ---------------------------------------------------------------------------
// wireframes

Wireframe parse_wireframe(std::istream& in, const std::string& source) {
  Wireframe wf;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::size_t line = 0;
  for (std::string s; std::getline(in, s);) {
    ++line;
    const auto toks = split_ws(s);
    if (is_blank_or_comment(toks)) continue;
    if (toks.front() == "v") {
      wf.vertices.push_back(parse_vertex(toks, source, line));
    } else if (toks.front() == "l") {
      if (toks.size() < 3) throw ParseError(source, line, "`l` record needs at least 2 indices");
      records.emplace_back(line, std::vector<std::string>(toks.begin() + 1, toks.end()));
    }
  }
  std::set<Edge> seen;
  for (const auto& [ln, idx] : records) {
    // Polylines become consecutive edges.
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
      const int a = parse_obj_index(idx[k], wf.vertices.size(), source, ln);
      const int b = parse_obj_index(idx[k + 1], wf.vertices.size(), source, ln);
      if (a == b) throw ParseError(source, ln, "self-loop edge");
      if (seen.insert(Edge(a, b)).second) wf.edges.emplace_back(a, b);
    }
  }
  return wf;
}

Wireframe read_wireframe(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_wireframe(in, path.string());
}

void write_wireframe(std::ostream& out, const Wireframe& wf) {
  const auto problems = validate_wireframe(wf);
  if (!problems.empty()) throw GeometryError("write_wireframe: invalid wireframe: " + problems.front());
  out << "# wireframe: " << wf.vertices.size() << " vertices, " << wf.edges.size() << " edges\n";
  for (const Vec3& v : wf.vertices)
    out << "v " << format_real(v.x()) << ' ' << format_real(v.y()) << ' ' << format_real(v.z())
        << '\n';
  for (const Edge& e : wf.edges) out << "l " << e.a + 1 << ' ' << e.b + 1 << '\n';
}

void write_wireframe(const Wireframe& wf, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_wireframe(out, wf);
}

// ---------------------------------------------------------------------------
// cameras

std::vector<Camera> parse_cameras(const std::string& text, const std::string& source) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(source, 0, std::string("invalid JSON: ") + e.what());
  }
  auto fail = [&](std::size_t view, const std::string& what) {
    throw ParseError(source, 0, "camera " + std::to_string(view) + ": " + what);
  };
  if (!doc.is_object() || !doc.contains("cameras") || !doc["cameras"].is_array())
    throw ParseError(source, 0, "expected an object with a \"cameras\" array");

  std::vector<Camera> cams;
  for (std::size_t i = 0; i < doc["cameras"].size(); ++i) {
    const json& c = doc["cameras"][i];
    auto reals = [&](const char* key, std::size_t n) {
      if (!c.is_object() || !c.contains(key) || !c[key].is_array() || c[key].size() != n)
        fail(i, std::string("field \"") + key + "\" must hold " + std::to_string(n) + " numbers");
      std::vector<double> v;
      for (const auto& x : c[key]) {
        if (!x.is_number()) fail(i, std::string("field \"") + key + "\" must be numeric");
        v.push_back(x.get<double>());
      }
      return v;
    };
    const auto k = reals("K", 9), r = reals("R", 9), t = reals("t", 3);
    Camera cam;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        cam.K(a, b) = k[3 * a + b];
        cam.R(a, b) = r[3 * a + b];
      }
      cam.t[a] = t[a];
    }
    if (!c.contains("width") || !c["width"].is_number_integer() || !c.contains("height") ||
        !c["height"].is_number_integer())
      fail(i, "width and height must be integers");
    cam.width = c["width"].get<int>();
    cam.height = c["height"].get<int>();
    if (const auto bad = cam.check(1e-4); !bad.empty()) fail(i, bad);
    cams.push_back(cam);
  }
  return cams;
}

std::vector<Camera> read_cameras(const std::filesystem::path& path) {
  return parse_cameras(read_text(path), path.string());
}

std::string format_cameras(const std::vector<Camera>& cams) {
  using nlohmann::json;
  json arr = json::array();
  for (const auto& cam : cams) {
    json c;
    std::vector<double> k, r;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        k.push_back(cam.K(a, b));
        r.push_back(cam.R(a, b));
      }
    c["K"] = k;
    c["R"] = r;
    c["t"] = {cam.t.x(), cam.t.y(), cam.t.z()};
    c["width"] = cam.width;
    c["height"] = cam.height;
    arr.push_back(c);
  }
  return json{{"cameras", arr}}.dump(2) + "\n";
}

void write_cameras(const std::vector<Camera>& cams, const std::filesystem::path& path) {
  write_text(path, format_cameras(cams));
}

// ---------------------------------------------------------------------------
// weights

std::int64_t NamedTensor::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const NamedTensor* WeightsFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

constexpr char kMagic[4] = {'L', 'C', 'W', 'W'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (n > remaining())
      throw WeightsError(WeightsError::Kind::Format, source_ + ": truncated weights file");
  }
  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_weights(const WeightsFile& wf) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, wf.version);
  put<std::uint64_t>(out, wf.metadata.size());
  out += wf.metadata;
  put<std::uint64_t>(out, wf.tensors.size());
  for (const auto& t : wf.tensors) {
    if (static_cast<std::int64_t>(t.values.size()) != t.numel())
      throw WeightsError(WeightsError::Kind::Shape, "tensor " + t.name + ": value count mismatch");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::int64_t>(out, d);
    for (double v : t.values) put<double>(out, v);
  }
  return out;
}

WeightsFile parse_weights(const std::string& bytes, const std::string& source) {
  using K = WeightsError::Kind;
  Reader r(bytes, source);
  if (r.str(4) != std::string(kMagic, 4)) throw WeightsError(K::Format, source + ": not a weights file");
  WeightsFile wf;
  wf.version = r.get<std::uint32_t>();
  if (wf.version != WeightsFile::kVersion)
    throw WeightsError(K::Format, source + ": unsupported weights version " + std::to_string(wf.version));
  const auto meta_len = r.get<std::uint64_t>();
  if (meta_len > r.remaining()) throw WeightsError(K::Format, source + ": truncated metadata");
  wf.metadata = r.str(meta_len);
  const auto count = r.get<std::uint64_t>();
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.get<std::uint32_t>());
    if (!names.insert(t.name).second)
      throw WeightsError(K::Format, source + ": duplicate tensor " + t.name);
    const auto ndim = r.get<std::uint32_t>();
    if (ndim > 8) throw WeightsError(K::Format, source + ": tensor " + t.name + " has too many dims");
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = r.get<std::int64_t>();
      if (dim < 0 || (dim > 0 && n > static_cast<std::int64_t>(r.remaining() / 8) / dim))
        throw WeightsError(K::Format, source + ": tensor " + t.name + " has an invalid shape");
      t.shape.push_back(dim);
      n *= dim;
    }
    t.values.resize(static_cast<std::size_t>(n));
    for (auto& v : t.values) v = r.get<double>();
    wf.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw WeightsError(K::Format, source + ": trailing bytes");
  return wf;
}

WeightsFile read_weights_file(const std::filesystem::path& path) {
  return parse_weights(read_text(path), path.string());
}

void write_weights_file(const WeightsFile& wf, const std::filesystem::path& path) {
  write_text(path, serialize_weights(wf));
}

std::string read_text(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace lcwire
