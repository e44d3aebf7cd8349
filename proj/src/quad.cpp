#include "dpl/quad.hpp"

#include <cmath>

namespace dpl {
namespace {

double adapt(const std::function<double(double)>& f, double a, double b,
             double fa, double fm, double fb, double whole, double tol,
             int depth, int max_depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double err = left + right - whole;
  if (std::abs(err) <= 15.0 * tol) return left + right + err / 15.0;
  if (depth >= max_depth)
    throw QuadratureError("integrate: adaptive refinement did not converge");
  return adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth) +
         adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol, int max_depth, int init_panels) {
  if (!(b > a)) return 0.0;
  if (init_panels < 1) init_panels = 1;
  const double h = (b - a) / init_panels;
  const double panel_tol = abs_tol / init_panels;
  double total = 0.0;
  for (int i = 0; i < init_panels; ++i) {
    const double x0 = a + i * h;
    const double x1 = (i + 1 == init_panels) ? b : x0 + h;
    const double xm = 0.5 * (x0 + x1);
    const double f0 = f(x0), fm = f(xm), f1 = f(x1);
    const double whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
    total += adapt(f, x0, x1, f0, fm, f1, whole, panel_tol, 0, max_depth);
  }
  return total;
}

}  // namespace dpl
