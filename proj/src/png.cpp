#include "recat/png.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include <png.h>

#include "recat/error.hpp"

namespace recat {

Image::Image(std::size_t w, std::size_t h, Rgb fill) : width(w), height(h), rgb(3 * w * h) {
    for (std::size_t i = 0; i < w * h; ++i) {
        rgb[3 * i] = fill.r;
        rgb[3 * i + 1] = fill.g;
        rgb[3 * i + 2] = fill.b;
    }
}

void Image::set(std::size_t x, std::size_t y, Rgb c) {
    if (x >= width || y >= height) return;
    const std::size_t i = 3 * (y * width + x);
    rgb[i] = c.r;
    rgb[i + 1] = c.g;
    rgb[i + 2] = c.b;
}

void write_png(const std::string& path, const Image& img) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("failed to encode PNG '" + path + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.rgb.data() + 3 * y * img.width));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("failed to close '" + path + "'");
}

Rgb latent_pixel(const LatentGrid& g, std::size_t h, std::size_t w) {
    auto q = [](double v) {
        const double x = std::clamp((v + 1.0) * 127.5, 0.0, 255.0);
        return static_cast<std::uint8_t>(std::lround(x));
    };
    if (g.channels() < 3) {
        const auto v = q(g.at(0, h, w));
        return {v, v, v};
    }
    return {q(g.at(0, h, w)), q(g.at(1, h, w)), q(g.at(2, h, w))};
}

Image tile_grids(const std::vector<std::vector<LatentGrid>>& rows, std::size_t scale) {
    if (rows.empty() || rows.front().empty()) return Image(1, 1);
    const std::size_t gh = rows.front().front().height(), gw = rows.front().front().width();
    std::size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const std::size_t cell_w = gw * scale + 1, cell_h = gh * scale + 1;
    Image img(cols * cell_w + 1, rows.size() * cell_h + 1, {40, 40, 40});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const LatentGrid& g = rows[r][c];
            if (g.height() != gh || g.width() != gw) throw ShapeMismatch("tile_grids: grids differ in size");
            for (std::size_t y = 0; y < gh * scale; ++y)
                for (std::size_t x = 0; x < gw * scale; ++x)
                    img.set(1 + c * cell_w + x, 1 + r * cell_h + y, latent_pixel(g, y / scale, x / scale));
        }
    return img;
}

namespace {

// 3x5 glyphs, one row per string, '#' set.
const std::map<char, const char*>& font() {
    static const std::map<char, const char*> f = {
        {'0', "###"
              "# #"
              "# #"
              "# #"
              "###"},
        {'1', " # "
              "## "
              " # "
              " # "
              "###"},
        {'2', "###"
              "  #"
              "###"
              "#  "
              "###"},
        {'3', "###"
              "  #"
              "###"
              "  #"
              "###"},
        {'4', "# #"
              "# #"
              "###"
              "  #"
              "  #"},
        {'5', "###"
              "#  "
              "###"
              "  #"
              "###"},
        {'6', "###"
              "#  "
              "###"
              "# #"
              "###"},
        {'7', "###"
              "  #"
              "  #"
              "  #"
              "  #"},
        {'8', "###"
              "# #"
              "###"
              "# #"
              "###"},
        {'9', "###"
              "# #"
              "###"
              "  #"
              "###"},
        {'.', "   "
              "   "
              "   "
              "   "
              " # "},
        {'-', "   "
              "   "
              "###"
              "   "
              "   "},
        {'_', "   "
              "   "
              "   "
              "   "
              "###"},
        {'A', "###"
              "# #"
              "###"
              "# #"
              "# #"},
        {'C', "###"
              "#  "
              "#  "
              "#  "
              "###"},
        {'D', "## "
              "# #"
              "# #"
              "# #"
              "## "},
        {'E', "###"
              "#  "
              "## "
              "#  "
              "###"},
        {'F', "###"
              "#  "
              "## "
              "#  "
              "#  "},
        {'G', "###"
              "#  "
              "# #"
              "# #"
              "###"},
        {'I', "###"
              " # "
              " # "
              " # "
              "###"},
        {'M', "# #"
              "###"
              "###"
              "# #"
              "# #"},
        {'N', "###"
              "# #"
              "# #"
              "# #"
              "# #"},
        {'O', "###"
              "# #"
              "# #"
              "# #"
              "###"},
        {'R', "## "
              "# #"
              "## "
              "# #"
              "# #"},
        {'T', "###"
              " # "
              " # "
              " # "
              " # "},
        {'V', "# #"
              "# #"
              "# #"
              "# #"
              " # "},
        {'W', "# #"
              "# #"
              "###"
              "###"
              "# #"},
    };
    return f;
}

constexpr std::size_t kGlyphScale = 2;

void draw_text(Image& img, std::size_t x, std::size_t y, const std::string& text, Rgb c) {
    const auto& f = font();
    for (char raw : text) {
        const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
        const auto it = f.find(ch);
        if (it != f.end())
            for (std::size_t gy = 0; gy < 5; ++gy)
                for (std::size_t gx = 0; gx < 3; ++gx)
                    if (it->second[gy * 3 + gx] == '#')
                        for (std::size_t s = 0; s < kGlyphScale * kGlyphScale; ++s)
                            img.set(x + gx * kGlyphScale + s % kGlyphScale, y + gy * kGlyphScale + s / kGlyphScale, c);
        x += 4 * kGlyphScale;
    }
}

void draw_line(Image& img, double x0, double y0, double x1, double y1, Rgb c) {
    const int n = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
    for (int i = 0; i <= n; ++i) {
        const double a = static_cast<double>(i) / n;
        img.set(static_cast<std::size_t>(std::lround(x0 + a * (x1 - x0))),
                static_cast<std::size_t>(std::lround(y0 + a * (y1 - y0))), c);
    }
}

std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

}  // namespace

Image line_chart(const std::vector<LineSeries>& series, const std::string& x_label, const std::string& y_label) {
    constexpr std::size_t W = 480, H = 320, left = 70, right = 20, top = 40, bottom = 50;
    Image img(W, H);
    const Rgb black{0, 0, 0};
    const Rgb palette[] = {{200, 40, 40}, {40, 90, 200}, {30, 150, 60}, {160, 80, 170}};
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmin <= xmax)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

    draw_line(img, left, top, left, top + ph, black);
    draw_line(img, left, top + ph, left + pw, top + ph, black);
    draw_text(img, left - 4, top + static_cast<std::size_t>(ph) + 8, short_num(xmin), black);
    draw_text(img, left + static_cast<std::size_t>(pw) - 30, top + static_cast<std::size_t>(ph) + 8, short_num(xmax), black);
    draw_text(img, 4, top + static_cast<std::size_t>(ph) - 10, short_num(ymin), black);
    draw_text(img, 4, top, short_num(ymax), black);
    draw_text(img, left + static_cast<std::size_t>(pw) / 2 - 20, H - 18, x_label, black);
    draw_text(img, 4, top - 24, y_label, black);

    for (std::size_t k = 0; k < series.size(); ++k) {
        const Rgb c = palette[k % 4];
        const auto& s = series[k];
        for (std::size_t i = 0; i + 1 < s.x.size() && i + 1 < s.y.size(); ++i)
            draw_line(img, px(s.x[i]), py(s.y[i]), px(s.x[i + 1]), py(s.y[i + 1]), c);
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            for (int d = -2; d <= 2; ++d) {
                img.set(static_cast<std::size_t>(std::lround(px(s.x[i]) + d)), static_cast<std::size_t>(std::lround(py(s.y[i]))), c);
                img.set(static_cast<std::size_t>(std::lround(px(s.x[i]))), static_cast<std::size_t>(std::lround(py(s.y[i]) + d)), c);
            }
        draw_line(img, left + pw - 150, top + 8 + 14.0 * k, left + pw - 130, top + 8 + 14.0 * k, c);
        draw_text(img, left + static_cast<std::size_t>(pw) - 124, top + 3 + 14 * k, s.label, c);
    }
    return img;
}

}  // namespace recat
