#pragma once

#include "selfpath/evalkit.hpp"
#include "selfpath/image.hpp"

#include <string>
#include <vector>

namespace selfpath::plot {

// AUC-vs-budget curves, one polyline per arm, with axes, tick labels and
// per-arm legend swatches. Written as PPM.
void render_budget_curves(const std::string& path,
                          const std::vector<evalkit::BudgetResult>& results);

// Low-level helpers (exposed for the preview grid in the CLI).
void draw_line(Image& img, int y0, int x0, int y1, int x1, float r, float g, float b);
void draw_text(Image& img, int y, int x, const std::string& text, float r, float g, float b,
               int scale = 1);

}  // namespace selfpath::plot
