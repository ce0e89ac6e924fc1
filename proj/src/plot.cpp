#include "selfpath/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace selfpath::plot {

namespace {

// 3x5 glyphs, row-major bits (msb = left column).
struct Glyph {
    char ch;
    uint8_t rows[5];
};

const Glyph kGlyphs[] = {
    {'0', {0b111, 0b101, 0b101, 0b101, 0b111}}, {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
    {'2', {0b111, 0b001, 0b111, 0b100, 0b111}}, {'3', {0b111, 0b001, 0b111, 0b001, 0b111}},
    {'4', {0b101, 0b101, 0b111, 0b001, 0b001}}, {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
    {'6', {0b111, 0b100, 0b111, 0b101, 0b111}}, {'7', {0b111, 0b001, 0b010, 0b010, 0b010}},
    {'8', {0b111, 0b101, 0b111, 0b101, 0b111}}, {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
    {'.', {0b000, 0b000, 0b000, 0b000, 0b010}}, {'%', {0b101, 0b001, 0b010, 0b100, 0b101}},
    {'-', {0b000, 0b000, 0b111, 0b000, 0b000}}, {' ', {0, 0, 0, 0, 0}},
};

const uint8_t* glyph_rows(char c) {
    for (const auto& g : kGlyphs)
        if (g.ch == c) return g.rows;
    return nullptr;
}

void put_px(Image& img, int y, int x, float r, float g, float b) {
    if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
}

}  // namespace

void draw_line(Image& img, int y0, int x0, int y1, int x1, float r, float g, float b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    int x = x0, y = y0;
    while (true) {
        put_px(img, y, x, r, g, b);
        if (x == x1 && y == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
}

void draw_text(Image& img, int y, int x, const std::string& text, float r, float g, float b,
               int scale) {
    int cx = x;
    for (char c : text) {
        const uint8_t* rows = glyph_rows(c);
        if (rows) {
            for (int gy = 0; gy < 5; ++gy)
                for (int gx = 0; gx < 3; ++gx)
                    if (rows[gy] & (0b100 >> gx))
                        for (int sy = 0; sy < scale; ++sy)
                            for (int sx = 0; sx < scale; ++sx)
                                put_px(img, y + gy * scale + sy, cx + gx * scale + sx, r, g, b);
        }
        cx += 4 * scale;
    }
}

void render_budget_curves(const std::string& path,
                          const std::vector<evalkit::BudgetResult>& results) {
    const int W = 640, H = 480, ml = 70, mr = 20, mt = 30, mb = 50;
    Image img(H, W, 3, 1.f);

    std::vector<std::string> arms;
    std::vector<double> budgets;
    for (const auto& r : results) {
        if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) arms.push_back(r.arm);
        if (std::find(budgets.begin(), budgets.end(), r.budget) == budgets.end())
            budgets.push_back(r.budget);
    }
    std::sort(budgets.begin(), budgets.end());
    if (budgets.empty()) throw DataError("render_budget_curves: no results");

    double ymin = 1.0, ymax = 0.0;
    for (const auto& r : results) {
        if (r.per_seed_auc.empty()) continue;
        ymin = std::min(ymin, r.auc_mean - r.auc_std);
        ymax = std::max(ymax, r.auc_mean + r.auc_std);
    }
    ymin = std::max(0.0, std::floor((ymin - 0.02) * 20.0) / 20.0);
    ymax = std::min(1.0, std::ceil((ymax + 0.02) * 20.0) / 20.0);
    if (ymax - ymin < 0.1) ymin = std::max(0.0, ymax - 0.1);

    const double bx0 = budgets.front(), bx1 = budgets.back();
    auto to_x = [&](double budget) {
        if (bx1 == bx0) return (ml + W - mr) / 2;
        return ml + static_cast<int>((budget - bx0) / (bx1 - bx0) * (W - ml - mr));
    };
    auto to_y = [&](double auc) {
        return H - mb - static_cast<int>((auc - ymin) / (ymax - ymin) * (H - mt - mb));
    };

    // axes
    draw_line(img, H - mb, ml, mt, ml, 0, 0, 0);
    draw_line(img, H - mb, ml, H - mb, W - mr, 0, 0, 0);
    for (int i = 0; i <= 5; ++i) {
        const double v = ymin + (ymax - ymin) * i / 5.0;
        const int y = to_y(v);
        draw_line(img, y, ml - 4, y, ml, 0, 0, 0);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        draw_text(img, y - 3, ml - 45, buf, 0, 0, 0, 2);
    }
    for (double b : budgets) {
        const int x = to_x(b);
        draw_line(img, H - mb, x, H - mb + 4, x, 0, 0, 0);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%g%%", b * 100.0);
        draw_text(img, H - mb + 8, x - 10, buf, 0, 0, 0, 2);
    }

    const float palette[6][3] = {{0.85f, 0.1f, 0.1f}, {0.1f, 0.3f, 0.85f}, {0.1f, 0.6f, 0.2f},
                                 {0.8f, 0.5f, 0.0f},  {0.5f, 0.1f, 0.7f}, {0.1f, 0.6f, 0.6f}};

    for (size_t a = 0; a < arms.size(); ++a) {
        const float* col = palette[a % 6];
        int px = -1, py = -1;
        for (double b : budgets) {
            const evalkit::BudgetResult* cell = nullptr;
            for (const auto& r : results)
                if (r.arm == arms[a] && r.budget == b) cell = &r;
            if (!cell || cell->per_seed_auc.empty()) continue;
            const int x = to_x(b), y = to_y(cell->auc_mean);
            // std whiskers
            draw_line(img, to_y(cell->auc_mean - cell->auc_std), x,
                      to_y(cell->auc_mean + cell->auc_std), x, col[0], col[1], col[2]);
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx)
                    put_px(img, y + dy, x + dx, col[0], col[1], col[2]);
            if (px >= 0) {
                draw_line(img, py, px, y, x, col[0], col[1], col[2]);
                draw_line(img, py + 1, px, y + 1, x, col[0], col[1], col[2]);
            }
            px = x;
            py = y;
        }
        // legend swatch
        for (int dy = 0; dy < 8; ++dy)
            for (int dx = 0; dx < 8; ++dx)
                put_px(img, mt + static_cast<int>(a) * 14 + dy, W - mr - 60 + dx,
                       col[0], col[1], col[2]);
        draw_text(img, mt + static_cast<int>(a) * 14 + 1, W - mr - 48,
                  std::to_string(a), 0, 0, 0, 2);
    }

    write_ppm(path, img);
}

}  // namespace selfpath::plot
