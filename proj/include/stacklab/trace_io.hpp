#pragma once

// Per-stage trace rows, their CSV form and SVG convergence plots.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stacklab {

struct StageTrace {
  std::size_t stage = 0;
  double loss = 0.0;
  double suboptimality = 0.0;  // loss - loss(W*)
  std::optional<double> delta_norm;
  std::optional<double> alpha_budget;
  std::optional<double> phi;
  std::optional<double> lemma_bound;
  std::optional<double> eta;
  std::optional<std::int64_t> wall_ns;

  friend bool operator==(const StageTrace&, const StageTrace&) = default;
};

inline constexpr std::string_view kTraceHeader =
    "stage,loss,suboptimality,delta_norm,alpha_budget,phi,lemma_bound,eta,wall_ns";

// Shortest decimal that parses back to the same double.
std::string format_number(double v);

// One CSV row without line terminator.
std::string format_trace_row(const StageTrace& row);
std::string format_csv(const std::vector<StageTrace>& traces);
std::vector<StageTrace> parse_csv(std::string_view text);

// Throw std::runtime_error naming the path on I/O failure.
void emit_csv(const std::vector<StageTrace>& traces, const std::filesystem::path& path);
std::vector<StageTrace> read_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::vector<StageTrace> traces;
};

// Line chart of suboptimality against stage, log-scale y axis.
std::string format_svg(const std::vector<PlotSeries>& series, std::string_view title);
void emit_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& path,
               std::string_view title = "suboptimality");

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace stacklab
