#include "capture/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include "capture/error.hpp"

namespace capture {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

void add_point(ScaleCurve& curve, double scale, int trials, int successes) {
  for (auto& p : curve.points) {
    if (std::abs(p.scale - scale) < 1e-9) {
      p.trials += trials;
      p.successes += successes;
      return;
    }
  }
  curve.points.push_back({scale, trials, successes, 0});
}

// 3x5 glyphs for tick labels.
const std::map<char, std::array<const char*, 5>>& glyphs() {
  static const std::map<char, std::array<const char*, 5>> g{
      {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
      {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", "###", "..#", "###"}},
      {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
      {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", "..#", "..#", "..#"}},
      {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
      {'.', {"...", "...", "...", "...", ".#."}}};
  return g;
}

struct Canvas {
  ImageTensor img;
  void set(int r, int c, std::array<double, 3> rgb) {
    if (r < 0 || c < 0 || r >= img.height() || c >= img.width()) return;
    for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = rgb[ch];
  }
  void line(double r0, double c0, double r1, double c1, std::array<double, 3> rgb, int thick = 1) {
    const int n = static_cast<int>(std::max(std::abs(r1 - r0), std::abs(c1 - c0))) + 1;
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      const int r = static_cast<int>(std::lround(r0 + t * (r1 - r0)));
      const int c = static_cast<int>(std::lround(c0 + t * (c1 - c0)));
      for (int dr = -(thick / 2); dr <= thick / 2; ++dr) {
        for (int dc = -(thick / 2); dc <= thick / 2; ++dc) set(r + dr, c + dc, rgb);
      }
    }
  }
  void text(int r, int c, const std::string& s, std::array<double, 3> rgb) {
    for (char ch : s) {
      const auto it = glyphs().find(ch);
      if (it != glyphs().end()) {
        for (int y = 0; y < 5; ++y) {
          for (int x = 0; x < 3; ++x) {
            if (it->second[y][x] == '#') set(r + y, c + x, rgb);
          }
        }
      }
      c += 4;
    }
  }
};

}  // namespace

std::vector<CurveSet> curves_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty curve CSV");
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_scale = col("scale"), c_trials = col("trials"), c_succ = col("successes");
  const int c_split = col("split"), c_role = col("role");
  if (c_scale < 0 || c_trials < 0 || c_succ < 0) {
    throw FormatError("curve CSV needs scale, trials and successes columns");
  }
  std::vector<CurveSet> sets;
  auto set_for = [&](const std::string& held_out) -> CurveSet& {
    for (auto& s : sets) {
      if (s.held_out == held_out) return s;
    }
    sets.push_back({held_out, {held_out, 0, {}}, std::nullopt});
    return sets.back();
  };
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw FormatError("curve CSV line " + std::to_string(n) + " has the wrong arity");
    try {
      const double scale = std::stod(cells[c_scale]);
      const int trials = std::stoi(cells[c_trials]);
      const int succ = std::stoi(cells[c_succ]);
      CurveSet& s = set_for(c_split >= 0 ? cells[c_split] : "curve");
      const bool white = c_role >= 0 && cells[c_role] == "white-box";
      if (white) {
        if (!s.white_box) s.white_box = ScaleCurve{s.held_out, 0, {}};
        add_point(*s.white_box, scale, trials, succ);
      } else {
        add_point(s.held_out_curve, scale, trials, succ);
      }
    } catch (const std::logic_error&) {
      throw FormatError("curve CSV line " + std::to_string(n) + " has a non-numeric field");
    }
  }
  for (auto& s : sets) {
    auto by_scale = [](const ScalePoint& a, const ScalePoint& b) { return a.scale < b.scale; };
    std::sort(s.held_out_curve.points.begin(), s.held_out_curve.points.end(), by_scale);
    if (s.white_box) std::sort(s.white_box->points.begin(), s.white_box->points.end(), by_scale);
  }
  if (sets.empty()) throw FormatError("curve CSV has no rows");
  return sets;
}

ImageTensor plot_curve(const CurveSet& curves, int width, int height) {
  if (width < 120 || height < 100) throw InvalidArgument("plot must be at least 120x100");
  Canvas cv{ImageTensor(height, width, 1.0)};
  const int left = 36, right = width - 12, top = 12, bottom = height - 24;
  auto x_of = [&](double s) { return left + s * (right - left); };
  auto y_of = [&](double r) { return bottom - r * (bottom - top); };
  const std::array<double, 3> grid{0.88, 0.88, 0.88}, axis{0.0, 0.0, 0.0};
  for (int i = 0; i <= 10; ++i) {
    const double v = i / 10.0;
    cv.line(y_of(0), x_of(v), y_of(1), x_of(v), grid);
    cv.line(y_of(v), x_of(0), y_of(v), x_of(1), grid);
  }
  cv.line(y_of(0), x_of(0), y_of(0), x_of(1), axis);
  cv.line(y_of(0), x_of(0), y_of(1), x_of(0), axis);
  for (int i = 0; i <= 10; i += 2) {
    std::ostringstream label;
    label << (i == 10 ? "1.0" : "0." + std::to_string(i));
    cv.text(bottom + 6, static_cast<int>(x_of(i / 10.0)) - 6, label.str(), axis);
    cv.text(static_cast<int>(y_of(i / 10.0)) - 2, 4, label.str(), axis);
  }
  auto draw = [&](const ScaleCurve& c, std::array<double, 3> rgb) {
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      const double x = x_of(c.points[i].scale), y = y_of(c.points[i].success_rate());
      if (i > 0) {
        cv.line(y_of(c.points[i - 1].success_rate()), x_of(c.points[i - 1].scale), y, x, rgb, 2);
      }
      for (int d = -2; d <= 2; ++d) cv.line(y + d, x - 2, y + d, x + 2, rgb);
    }
  };
  if (curves.white_box) draw(*curves.white_box, {0.15, 0.35, 0.85});
  draw(curves.held_out_curve, {0.85, 0.15, 0.15});
  return cv.img;
}

}  // namespace capture
