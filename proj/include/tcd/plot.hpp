#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tcd {

// Minimal CSV table: one header row, string cells, numeric access on demand.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    double num(std::size_t row, std::size_t col) const;
    bool is_numeric_column(std::size_t col) const;
    int column(const std::string& name) const;  // -1 if absent
};

Csv read_csv(const std::filesystem::path& path);
void write_csv(const Csv& csv, const std::filesystem::path& path);

enum class PlotKind { LINE, BAR, HEATMAP };

PlotKind plot_kind_from_string(const std::string& s);

// Static SVG rendering of a CSV table. LINE plots y_columns against x_column;
// BAR draws one bar per row of the first y column with x_column as category
// labels; HEATMAP renders all numeric columns as a colored matrix (a leading
// non-numeric column becomes row labels). Output bytes are deterministic for
// identical input.
std::string render_svg(const Csv& csv, PlotKind kind, int x_column,
                       const std::vector<int>& y_columns, const std::string& title);

void plot_csv(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
              PlotKind kind, const std::string& x_column, const std::vector<std::string>& y_columns,
              const std::string& title);

}  // namespace tcd
