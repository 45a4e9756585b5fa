#include "gwpk/plot.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace gwpk {

namespace {

constexpr int kCell = 6;
constexpr int kMargin = 40;

// Perceptually ordered dark-to-light ramp.
std::string colour(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(255 * std::clamp(1.5 * v - 0.2, 0.0, 1.0));
  const int g = static_cast<int>(255 * std::clamp(1.4 * v * v, 0.0, 1.0));
  const int b = static_cast<int>(255 * std::clamp(0.35 + 0.9 * v - 1.1 * v * v, 0.0, 1.0));
  std::ostringstream os;
  os << '#' << std::hex << std::setfill('0') << std::setw(2) << r << std::setw(2) << g << std::setw(2) << b;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

void header(std::ostringstream& os, int w, int h, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kMargin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << escape(title)
     << "</text>\n";
}

void mask_block(std::ostringstream& os, const RegionMask& m, int x0, int y0, const std::string& label) {
  const Lattice& L = m.lattice;
  os << "<text x=\"" << x0 << "\" y=\"" << y0 - 6 << "\" font-family=\"sans-serif\" font-size=\"11\">"
     << escape(label) << "</text>\n";
  for (int j = 0; j < L.nx; ++j)
    for (int k = 0; k < L.nxi; ++k)
      os << "<rect x=\"" << x0 + j * kCell << "\" y=\"" << y0 + (L.nxi - 1 - k) * kCell << "\" width=\"" << kCell
         << "\" height=\"" << kCell << "\" fill=\"" << (m.mask[L.index(j, k)] ? "#f2f2f2" : "#30304a") << "\"/>\n";
}

}  // namespace

std::string svg_heatmap(const Lattice& lat, const RVec& values, const std::string& title, bool log_scale,
                        double decades) {
  if (values.size() != lat.size()) fail(ErrorCode::invalid_argument, "svg_heatmap: one value per node required");
  double mx = 0.0;
  for (double v : values) mx = std::max(mx, std::abs(v));
  std::ostringstream os;
  const int w = lat.nx * kCell + 2 * kMargin, h = lat.nxi * kCell + 2 * kMargin;
  header(os, w, h, title);
  for (int j = 0; j < lat.nx; ++j)
    for (int k = 0; k < lat.nxi; ++k) {
      const double v = std::abs(values[lat.index(j, k)]);
      double c = 0.0;
      if (mx > 0.0) c = log_scale ? (v > 0.0 ? 1.0 + std::log10(v / mx) / decades : 0.0) : v / mx;
      os << "<rect x=\"" << kMargin + j * kCell << "\" y=\"" << kMargin + (lat.nxi - 1 - k) * kCell << "\" width=\""
         << kCell << "\" height=\"" << kCell << "\" fill=\"" << colour(c) << "\"/>\n";
    }
  os << "<text x=\"" << kMargin << "\" y=\"" << h - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">x in ["
     << lat.x(0) << ", " << lat.x(lat.nx - 1) << "], xi in [" << lat.xi(0) << ", " << lat.xi(lat.nxi - 1) << "]"
     << (log_scale ? ", log10 scale over " + std::to_string(static_cast<int>(decades)) + " decades" : "")
     << "</text>\n</svg>\n";
  return os.str();
}

std::string svg_decay_scatter(const RVec& r, const RVec& amplitude, const DecayFit& fit, const std::string& title) {
  if (r.size() != amplitude.size()) fail(ErrorCode::invalid_argument, "svg_decay_scatter: size mismatch");
  const int W = 520, H = 380, pw = W - 2 * kMargin, ph = H - 2 * kMargin;
  double rmax = 1.0, lmin = 0.0, lmax = -1e300;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(amplitude[i] > 0.0)) continue;
    rmax = std::max(rmax, r[i]);
    lmax = std::max(lmax, std::log(amplitude[i]));
    lmin = std::min(lmin, std::log(amplitude[i]));
  }
  if (lmax < lmin) lmax = lmin + 1.0;
  lmin = std::max(lmin, lmax - 40.0);
  auto px = [&](double x) { return kMargin + pw * x / rmax; };
  auto py = [&](double y) { return kMargin + ph * (lmax - y) / (lmax - lmin); };
  std::ostringstream os;
  header(os, W, H, title);
  os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
  // thin the cloud so files stay small
  const std::size_t stride = std::max<std::size_t>(1, r.size() / 4000);
  for (std::size_t i = 0; i < r.size(); i += stride) {
    if (!(amplitude[i] > 0.0)) continue;
    const double l = std::log(amplitude[i]);
    if (l < lmin) continue;
    os << "<circle cx=\"" << px(r[i]) << "\" cy=\"" << py(l) << "\" r=\"1.2\" fill=\"#3b5b92\" fill-opacity=\"0.5\"/>\n";
  }
  const double y0 = std::clamp(fit.C, lmin, lmax), x1 = std::min(rmax, (fit.C - lmin) / std::max(fit.eps, 1e-12));
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(x1) << "\" y2=\"" << py(fit.C - fit.eps * x1)
     << "\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n";
  os << "<text x=\"" << kMargin << "\" y=\"" << H - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">"
     << "distance to flow image (0 to " << rmax << "); fit C = " << fit.C << ", eps = " << fit.eps
     << ", rms = " << fit.residual << "</text>\n</svg>\n";
  return os.str();
}

std::string svg_masks(const RegionMask& before, const RegionMask& after, const std::string& title) {
  const Lattice& L = before.lattice;
  const int bw = L.nx * kCell;
  std::ostringstream os;
  header(os, 2 * bw + 3 * kMargin, L.nxi * kCell + 2 * kMargin + 10, title);
  mask_block(os, before, kMargin, kMargin + 10, before.provenance + " (before)");
  mask_block(os, after, 2 * kMargin + bw, kMargin + 10, after.provenance + " (after)");
  os << "</svg>\n";
  return os.str();
}

void write_mask_png(const std::string& path, const RegionMask& m) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) fail(ErrorCode::io, "cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io, "libpng failed writing " + path);
  }
  const Lattice& L = m.lattice;
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, L.nx, L.nxi, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(L.nx);
  for (int k = L.nxi - 1; k >= 0; --k) {
    for (int j = 0; j < L.nx; ++j) row[j] = m.mask[L.index(j, k)] ? 255 : 0;
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::io, "cannot open " + path + " for writing");
  f << content;
  if (!f) fail(ErrorCode::io, "write failed: " + path);
}

}  // namespace gwpk
