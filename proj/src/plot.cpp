#include "tcd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tcd {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

bool parse_num(const std::string& s, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size();
    } catch (...) {
        return false;
    }
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

// blue -> white -> red diverging map over t in [0,1]
std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    int r, g, b;
    if (t < 0.5) {
        const double u = t / 0.5;
        r = static_cast<int>(59 + (255 - 59) * u);
        g = static_cast<int>(76 + (255 - 76) * u);
        b = static_cast<int>(192 + (255 - 192) * u);
    } else {
        const double u = (t - 0.5) / 0.5;
        r = static_cast<int>(255 - (255 - 180) * u);
        g = static_cast<int>(255 - (255 - 4) * u);
        b = static_cast<int>(255 - (255 - 38) * u);
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

constexpr int kW = 640, kH = 420;
constexpr int kLeft = 70, kRight = 30, kTop = 50, kBottom = 60;

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b", "#17becf"};

}  // namespace

double Csv::num(std::size_t row, std::size_t col) const {
    double v;
    if (!parse_num(rows.at(row).at(col), v))
        throw std::runtime_error("csv: non-numeric cell at row " + std::to_string(row + 1) +
                                 ", column " + std::to_string(col + 1));
    return v;
}

bool Csv::is_numeric_column(std::size_t col) const {
    double v;
    for (const auto& row : rows)
        if (col >= row.size() || !parse_num(row[col], v)) return false;
    return !rows.empty();
}

int Csv::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return static_cast<int>(c);
    return -1;
}

Csv read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv: " + path.string());
    Csv csv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (csv.header.empty())
            csv.header = split_line(line);
        else
            csv.rows.push_back(split_line(line));
    }
    if (csv.header.empty()) throw std::runtime_error("csv is empty: " + path.string());
    return csv;
}

void write_csv(const Csv& csv, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write csv: " + path.string());
    for (std::size_t c = 0; c < csv.header.size(); ++c)
        out << csv.header[c] << (c + 1 < csv.header.size() ? "," : "\n");
    for (const auto& row : csv.rows)
        for (std::size_t c = 0; c < row.size(); ++c)
            out << row[c] << (c + 1 < row.size() ? "," : "\n");
}

PlotKind plot_kind_from_string(const std::string& s) {
    if (s == "line") return PlotKind::LINE;
    if (s == "bar") return PlotKind::BAR;
    if (s == "heatmap") return PlotKind::HEATMAP;
    throw std::invalid_argument("unknown plot kind: " + s);
}

namespace {

void svg_header(std::string& svg, const std::string& title) {
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kW) +
           "\" height=\"" + std::to_string(kH) + "\" viewBox=\"0 0 " + std::to_string(kW) +
           " " + std::to_string(kH) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(kW / 2) +
           "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
           title + "</text>\n";
}

void svg_axes(std::string& svg, double xmin, double xmax, double ymin, double ymax,
              const std::string& xlabel, const std::string& ylabel) {
    const int x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
    svg += "<line x1=\"" + std::to_string(x0) + "\" y1=\"" + std::to_string(y0) + "\" x2=\"" +
           std::to_string(x1) + "\" y2=\"" + std::to_string(y0) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + std::to_string(x0) + "\" y1=\"" + std::to_string(y0) + "\" x2=\"" +
           std::to_string(x0) + "\" y2=\"" + std::to_string(y1) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + std::to_string(x0) + "\" y=\"" + std::to_string(y0 + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(xmin) + "</text>\n";
    svg += "<text x=\"" + std::to_string(x1) + "\" y=\"" + std::to_string(y0 + 18) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(xmax) +
           "</text>\n";
    svg += "<text x=\"" + std::to_string(x0 - 6) + "\" y=\"" + std::to_string(y0) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(ymin) +
           "</text>\n";
    svg += "<text x=\"" + std::to_string(x0 - 6) + "\" y=\"" + std::to_string(y1 + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(ymax) +
           "</text>\n";
    svg += "<text x=\"" + std::to_string((x0 + x1) / 2) + "\" y=\"" + std::to_string(kH - 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xlabel +
           "</text>\n";
    svg += "<text x=\"18\" y=\"" + std::to_string((y0 + y1) / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 18 " +
           std::to_string((y0 + y1) / 2) + ")\">" + ylabel + "</text>\n";
}

}  // namespace

std::string render_svg(const Csv& csv, PlotKind kind, int x_column,
                       const std::vector<int>& y_columns, const std::string& title) {
    if (csv.rows.empty()) throw std::runtime_error("plot: csv has no data rows");
    std::string svg;
    svg_header(svg, title);
    const int px0 = kLeft, px1 = kW - kRight, py0 = kH - kBottom, py1 = kTop;

    if (kind == PlotKind::HEATMAP) {
        // numeric block, with an optional leading label column
        std::size_t first_num = 0;
        if (!csv.is_numeric_column(0)) first_num = 1;
        std::vector<std::size_t> cols;
        for (std::size_t c = first_num; c < csv.header.size(); ++c)
            if (csv.is_numeric_column(c)) cols.push_back(c);
        if (cols.empty()) throw std::runtime_error("plot: heatmap needs numeric columns");
        double vmin = csv.num(0, cols[0]), vmax = vmin;
        for (std::size_t r = 0; r < csv.rows.size(); ++r)
            for (auto c : cols) {
                vmin = std::min(vmin, csv.num(r, c));
                vmax = std::max(vmax, csv.num(r, c));
            }
        const double span = vmax > vmin ? vmax - vmin : 1.0;
        const double cw = static_cast<double>(px1 - px0) / cols.size();
        const double ch = static_cast<double>(py0 - py1) / csv.rows.size();
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            for (std::size_t k = 0; k < cols.size(); ++k) {
                const double v = csv.num(r, cols[k]);
                const double x = px0 + k * cw, y = py1 + r * ch;
                svg += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(cw) +
                       "\" height=\"" + fmt(ch) + "\" fill=\"" +
                       heat_color((v - vmin) / span) + "\"/>\n";
                svg += "<text x=\"" + fmt(x + cw / 2) + "\" y=\"" + fmt(y + ch / 2 + 4) +
                       "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                       "font-size=\"10\">" +
                       fmt(v) + "</text>\n";
            }
            const std::string label = first_num == 1 ? csv.rows[r][0] : std::to_string(r);
            svg += "<text x=\"" + std::to_string(px0 - 6) + "\" y=\"" +
                   fmt(py1 + r * ch + ch / 2 + 4) +
                   "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
                   label + "</text>\n";
        }
        for (std::size_t k = 0; k < cols.size(); ++k)
            svg += "<text x=\"" + fmt(px0 + k * cw + cw / 2) + "\" y=\"" +
                   std::to_string(py1 - 6) +
                   "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
                   csv.header[cols[k]] + "</text>\n";
        svg += "</svg>\n";
        return svg;
    }

    std::vector<int> ys = y_columns;
    if (ys.empty()) {
        for (std::size_t c = 0; c < csv.header.size(); ++c)
            if (static_cast<int>(c) != x_column && csv.is_numeric_column(c))
                ys.push_back(static_cast<int>(c));
    }
    if (ys.empty()) throw std::runtime_error("plot: no numeric y columns");

    if (kind == PlotKind::BAR) {
        const int yc = ys[0];
        double vmax = 0.0, vmin = 0.0;
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            vmax = std::max(vmax, csv.num(r, yc));
            vmin = std::min(vmin, csv.num(r, yc));
        }
        const double span = vmax > vmin ? vmax - vmin : 1.0;
        svg_axes(svg, 0, static_cast<double>(csv.rows.size()), vmin, vmax,
                 x_column >= 0 ? csv.header[x_column] : "", csv.header[yc]);
        const double bw = static_cast<double>(px1 - px0) / csv.rows.size();
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            const double v = csv.num(r, yc);
            const double h = (v - vmin) / span * (py0 - py1);
            svg += "<rect x=\"" + fmt(px0 + r * bw + bw * 0.1) + "\" y=\"" + fmt(py0 - h) +
                   "\" width=\"" + fmt(bw * 0.8) + "\" height=\"" + fmt(h) +
                   "\" fill=\"#1f77b4\"/>\n";
            if (x_column >= 0)
                svg += "<text x=\"" + fmt(px0 + r * bw + bw / 2) + "\" y=\"" +
                       std::to_string(py0 + 14) +
                       "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                       "font-size=\"10\">" +
                       csv.rows[r][x_column] + "</text>\n";
        }
        svg += "</svg>\n";
        return svg;
    }

    // LINE
    if (x_column < 0) throw std::runtime_error("plot: line plot needs an x column");
    double xmin = csv.num(0, x_column), xmax = xmin;
    double ymin = csv.num(0, ys[0]), ymax = ymin;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        xmin = std::min(xmin, csv.num(r, x_column));
        xmax = std::max(xmax, csv.num(r, x_column));
        for (int yc : ys) {
            ymin = std::min(ymin, csv.num(r, yc));
            ymax = std::max(ymax, csv.num(r, yc));
        }
    }
    const double xspan = xmax > xmin ? xmax - xmin : 1.0;
    const double yspan = ymax > ymin ? ymax - ymin : 1.0;
    svg_axes(svg, xmin, xmax, ymin, ymax, csv.header[x_column],
             ys.size() == 1 ? csv.header[ys[0]] : "value");
    for (std::size_t s = 0; s < ys.size(); ++s) {
        const char* color = kSeriesColors[s % 7];
        std::string points;
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            const double px = px0 + (csv.num(r, x_column) - xmin) / xspan * (px1 - px0);
            const double py = py0 - (csv.num(r, ys[s]) - ymin) / yspan * (py0 - py1);
            points += fmt(px) + "," + fmt(py) + " ";
            svg += "<circle cx=\"" + fmt(px) + "\" cy=\"" + fmt(py) + "\" r=\"2.5\" fill=\"" +
                   color + "\"/>\n";
        }
        svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + std::to_string(px1) + "\" y=\"" +
               std::to_string(py1 + 14 * static_cast<int>(s)) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" +
               color + "\">" + csv.header[ys[s]] + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

void plot_csv(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
              PlotKind kind, const std::string& x_column,
              const std::vector<std::string>& y_columns, const std::string& title) {
    const auto csv = read_csv(csv_path);
    int xc = -1;
    if (!x_column.empty()) {
        xc = csv.column(x_column);
        if (xc < 0) throw std::runtime_error("plot: no column named " + x_column);
    } else if (kind == PlotKind::LINE || kind == PlotKind::BAR) {
        xc = 0;
    }
    std::vector<int> ycs;
    for (const auto& name : y_columns) {
        const int c = csv.column(name);
        if (c < 0) throw std::runtime_error("plot: no column named " + name);
        ycs.push_back(c);
    }
    const auto svg = render_svg(csv, kind, xc, ycs,
                                title.empty() ? csv_path.filename().string() : title);
    std::ofstream out(svg_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write svg: " + svg_path.string());
    out << svg;
}

}  // namespace tcd
