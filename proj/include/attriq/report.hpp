#pragma once

// Attribution renderings: colored question text (ANSI or HTML) and the
// operator/column alignment matrix (CSV and SVG).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "attriq/attribution.hpp"
#include "attriq/csv.hpp"
#include "attriq/error.hpp"

namespace attriq {

struct Rgb {
  int r = 128, g = 128, b = 128;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ColorSpec {
  double value = 0.0;  // normalized to [-1, 1]
  Rgb rgb;
};

inline constexpr Rgb kGray{128, 128, 128};
inline constexpr Rgb kRed{255, 64, 64};
inline constexpr Rgb kBlue{64, 64, 255};

inline Rgb lerp(Rgb a, Rgb b, double t) {
  auto mix = [t](int x, int y) { return static_cast<int>(std::lround(x + (y - x) * t)); };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

/// Scores divided by the largest magnitude. |v| < 0.1 is gray; positive
/// values ramp to red, negative to blue.
inline std::vector<ColorSpec> color_scale(const std::vector<double>& scores) {
  double peak = 0.0;
  for (double s : scores) peak = std::max(peak, std::abs(s));
  std::vector<ColorSpec> out;
  for (double s : scores) {
    ColorSpec c;
    c.value = peak > 0.0 ? s / peak : 0.0;
    if (std::abs(c.value) >= 0.1) c.rgb = lerp(kGray, c.value > 0 ? kRed : kBlue, std::abs(c.value));
    out.push_back(c);
  }
  return out;
}

enum class TextMode { ansi, html };

inline std::string html_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string hex_rgb(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

}  // namespace detail

/// One colored span per token followed by prediction and gold lines. Omitted
/// reports render as a placeholder naming the reason.
inline std::string render_text(const AttributionReport& r, TextMode mode) {
  const bool html = mode == TextMode::html;
  std::string body;
  if (r.omitted) {
    const std::string why = "attribution omitted for " + r.instance_id + ": the empty-question baseline also selects " +
                            r.predicted;
    if (!html) return why + "\n";
    body = "<p class=\"omitted\">" + html_escape(why) + "</p>\n";
  } else {
    auto colors = color_scale(r.token_scores);
    std::string line;
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      const Rgb c = colors[i].rgb;
      if (html) {
        if (i) line += " ";
        line += "<span style=\"color:" + detail::hex_rgb(c) + "\" title=\"" + detail::fixed(r.token_scores[i], 6) +
                "\">" + html_escape(r.tokens[i]) + "</span>";
      } else {
        if (i) line += " ";
        line += "\x1b[38;2;" + std::to_string(c.r) + ";" + std::to_string(c.g) + ";" + std::to_string(c.b) + "m" +
                r.tokens[i] + "\x1b[0m";
      }
    }
    if (!html) return line + "\nprediction: " + r.prediction + "\ngold: " + r.gold + "\n";
    body = "<p class=\"question\">" + line + "</p>\n<p>prediction: " + html_escape(r.prediction) +
           "</p>\n<p>gold: " + html_escape(r.gold) + "</p>\n";
  }
  return "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>" + html_escape(r.instance_id) +
         "</title>\n</head>\n<body style=\"font-family:monospace;background:#ffffff\">\n" + body + "</body>\n</html>\n";
}

struct AlignmentMatrix {
  std::vector<std::string> row_labels;     // tokens, then prior entries
  std::vector<std::string> column_labels;  // "target (baseline)" per report
  std::vector<std::vector<double>> cells;  // rows x columns
};

/// Builds the matrix from the reports of one instance (operator steps then
/// column steps, as produced by attribute_program). Columns whose selection
/// equals the baseline selection are zero.
inline AlignmentMatrix alignment_matrix(const std::vector<AttributionReport>& reports) {
  if (reports.empty()) throw Error("alignment: no reports");
  const auto& first = reports.front();
  AlignmentMatrix m;
  m.row_labels = first.tokens;
  m.row_labels.insert(m.row_labels.end(), first.prior_names.begin(), first.prior_names.end());
  m.cells.assign(m.row_labels.size(), std::vector<double>(reports.size(), 0.0));
  for (std::size_t j = 0; j < reports.size(); ++j) {
    const auto& r = reports[j];
    if (r.instance_id != first.instance_id)
      throw Error("alignment: reports mix instances " + first.instance_id + " and " + r.instance_id);
    if (r.tokens != first.tokens || r.prior_names != first.prior_names)
      throw Error("alignment: reports for " + r.instance_id + " have different features");
    const std::string step = r.target.substr(0, r.target.find(':'));
    m.column_labels.push_back(step + " " + r.predicted + " (" + r.baseline_predicted + ")");
    if (r.omitted) continue;
    for (std::size_t i = 0; i < r.tokens.size(); ++i) m.cells[i][j] = r.token_scores[i];
    for (std::size_t i = 0; i < r.prior_scores.size(); ++i) m.cells[r.tokens.size() + i][j] = r.prior_scores[i];
  }
  return m;
}

inline std::string alignment_csv(const AlignmentMatrix& m) {
  std::vector<std::string> header{"feature"};
  header.insert(header.end(), m.column_labels.begin(), m.column_labels.end());
  std::string out = csv::format_row(header);
  for (std::size_t i = 0; i < m.row_labels.size(); ++i) {
    std::vector<std::string> row{m.row_labels[i]};
    for (double v : m.cells[i]) row.push_back(format_number(v));
    out += csv::format_row(row);
  }
  return out;
}

/// Heatmap with one rect per cell; colors are normalized over the whole matrix.
inline std::string alignment_svg(const AlignmentMatrix& m) {
  constexpr int cell = 28, left = 160, top = 170;
  const int w = left + cell * static_cast<int>(m.column_labels.size()) + 10;
  const int h = top + cell * static_cast<int>(m.row_labels.size()) + 10;
  std::vector<double> flat;
  for (const auto& row : m.cells) flat.insert(flat.end(), row.begin(), row.end());
  auto colors = color_scale(flat);
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
                  std::to_string(h) + "\" font-family=\"monospace\" font-size=\"11\">\n";
  s += "<rect width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) + "\" fill=\"#ffffff\"/>\n";
  for (std::size_t j = 0; j < m.column_labels.size(); ++j) {
    const int x = left + cell * static_cast<int>(j) + cell / 2;
    s += "<text transform=\"translate(" + std::to_string(x) + "," + std::to_string(top - 6) +
         ") rotate(-60)\">" + html_escape(m.column_labels[j]) + "</text>\n";
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < m.row_labels.size(); ++i) {
    const int y = top + cell * static_cast<int>(i);
    s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(y + cell / 2 + 4) +
         "\" text-anchor=\"end\">" + html_escape(m.row_labels[i]) + "</text>\n";
    for (std::size_t j = 0; j < m.column_labels.size(); ++j, ++k) {
      s += "<rect x=\"" + std::to_string(left + cell * static_cast<int>(j)) + "\" y=\"" + std::to_string(y) +
           "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" +
           detail::hex_rgb(colors[k].rgb) + "\" stroke=\"#ffffff\"><title>" + format_number(m.cells[i][j]) +
           "</title></rect>\n";
    }
  }
  return s + "</svg>\n";
}

struct AlignmentDocument {
  std::string csv;
  std::string svg;
};

inline AlignmentDocument render_alignment(const std::vector<AttributionReport>& reports) {
  AlignmentMatrix m = alignment_matrix(reports);
  return {alignment_csv(m), alignment_svg(m)};
}

}  // namespace attriq
