#include "stacklab/trace_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "stacklab/errors.hpp"

namespace stacklab {

namespace {

template <class T>
void append_optional(std::string& out, const std::optional<T>& v) {
  out += ',';
  if (!v) return;
  if constexpr (std::is_same_v<T, double>) {
    out += format_number(*v);
  } else {
    out += std::to_string(*v);
  }
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <class T>
T parse_field(std::string_view s, std::size_t line_no) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw UsageError("trace csv line " + std::to_string(line_no) + ": bad field '" +
                     std::string(s) + "'");
  }
  return v;
}

template <class T>
std::optional<T> parse_optional(std::string_view s, std::size_t line_no) {
  if (s.empty()) return std::nullopt;
  return parse_field<T>(s, line_no);
}

std::string xml_escape(std::string_view s) {
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

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw NumericError("format_number: conversion failed");
  return std::string(buf, ptr);
}

std::string format_trace_row(const StageTrace& r) {
  std::string out = std::to_string(r.stage);
  out += ',';
  out += format_number(r.loss);
  out += ',';
  out += format_number(r.suboptimality);
  append_optional(out, r.delta_norm);
  append_optional(out, r.alpha_budget);
  append_optional(out, r.phi);
  append_optional(out, r.lemma_bound);
  append_optional(out, r.eta);
  append_optional(out, r.wall_ns);
  return out;
}

std::string format_csv(const std::vector<StageTrace>& traces) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const StageTrace& r : traces) {
    out += format_trace_row(r);
    out += '\n';
  }
  return out;
}

std::vector<StageTrace> parse_csv(std::string_view text) {
  std::vector<StageTrace> rows;
  std::size_t line_no = 0;
  bool saw_header = false;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != kTraceHeader) throw UsageError("trace csv: unexpected header");
      saw_header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 9) {
      throw UsageError("trace csv line " + std::to_string(line_no) + ": expected 9 fields");
    }
    StageTrace r;
    r.stage = parse_field<std::size_t>(f[0], line_no);
    r.loss = parse_field<double>(f[1], line_no);
    r.suboptimality = parse_field<double>(f[2], line_no);
    r.delta_norm = parse_optional<double>(f[3], line_no);
    r.alpha_budget = parse_optional<double>(f[4], line_no);
    r.phi = parse_optional<double>(f[5], line_no);
    r.lemma_bound = parse_optional<double>(f[6], line_no);
    r.eta = parse_optional<double>(f[7], line_no);
    r.wall_ns = parse_optional<std::int64_t>(f[8], line_no);
    rows.push_back(r);
  }
  if (!saw_header) throw UsageError("trace csv: missing header");
  return rows;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit_csv(const std::vector<StageTrace>& traces, const std::filesystem::path& path) {
  if (traces.empty()) throw UsageError("emit_csv: no trace rows for " + path.string());
  write_text_file(path, format_csv(traces));
}

std::vector<StageTrace> read_csv(const std::filesystem::path& path) {
  try {
    return parse_csv(read_text_file(path));
  } catch (const UsageError& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

std::string format_svg(const std::vector<PlotSeries>& series, std::string_view title) {
  constexpr double width = 760, height = 460;
  constexpr double left = 70, right = 190, top = 40, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  std::size_t max_stage = 1;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const PlotSeries& s : series) {
    for (const StageTrace& r : s.traces) {
      max_stage = std::max(max_stage, r.stage);
      if (r.suboptimality > 0.0 && std::isfinite(r.suboptimality)) {
        lo = std::min(lo, std::log10(r.suboptimality));
        hi = std::max(hi, std::log10(r.suboptimality));
      }
    }
  }
  if (!(lo <= hi)) lo = hi = 0.0;
  lo = std::floor(lo);
  hi = std::ceil(hi);
  if (hi <= lo) hi = lo + 1;

  auto px = [&](double stage) { return left + plot_w * stage / static_cast<double>(max_stage); };
  auto py = [&](double log_v) { return top + plot_h * (hi - log_v) / (hi - lo); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\""
     << " font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << fixed(left + plot_w / 2) << "\" y=\"22\" text-anchor=\"middle\""
     << " font-size=\"14\">" << xml_escape(title) << "</text>\n";

  // Decade grid.
  const int decade_step = std::max(1, static_cast<int>((hi - lo) / 10.0 + 0.999));
  for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); e += decade_step) {
    const std::string y = fixed(py(e));
    os << "<line x1=\"" << fixed(left) << "\" y1=\"" << y << "\" x2=\"" << fixed(left + plot_w)
       << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n"
       << "<text x=\"" << fixed(left - 6) << "\" y=\"" << y
       << "\" text-anchor=\"end\" dominant-baseline=\"middle\">1e" << e << "</text>\n";
  }
  for (int k = 0; k <= 5; ++k) {
    const double stage = static_cast<double>(max_stage) * k / 5.0;
    os << "<text x=\"" << fixed(px(stage)) << "\" y=\"" << fixed(top + plot_h + 18)
       << "\" text-anchor=\"middle\">" << fixed(stage).substr(0, fixed(stage).find('.'))
       << "</text>\n";
  }
  os << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(plot_w)
     << "\" height=\"" << fixed(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n"
     << "<text x=\"" << fixed(left + plot_w / 2) << "\" y=\"" << fixed(height - 10)
     << "\" text-anchor=\"middle\">stage</text>\n"
     << "<text x=\"16\" y=\"" << fixed(top + plot_h / 2) << "\" text-anchor=\"middle\""
     << " transform=\"rotate(-90 16 " << fixed(top + plot_h / 2)
     << ")\">loss - loss(W*)</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const StageTrace& r : series[i].traces) {
      if (!(r.suboptimality > 0.0) || !std::isfinite(r.suboptimality)) continue;
      if (!first) os << ' ';
      os << fixed(px(static_cast<double>(r.stage))) << ','
         << fixed(py(std::log10(r.suboptimality)));
      first = false;
    }
    os << "\"/>\n";
    const double ly = top + 12 + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << fixed(left + plot_w + 12) << "\" y1=\"" << fixed(ly) << "\" x2=\""
       << fixed(left + plot_w + 36) << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << fixed(left + plot_w + 42) << "\" y=\"" << fixed(ly)
       << "\" dominant-baseline=\"middle\">" << xml_escape(series[i].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& path,
               std::string_view title) {
  if (series.empty()) throw UsageError("emit_plot: no series for " + path.string());
  write_text_file(path, format_svg(series, title));
}

}  // namespace stacklab
