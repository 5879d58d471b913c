// Writes the example inputs under samples/ (usage: make_samples <dir>).

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "mile/dyn_panel.hpp"
#include "mile/iv_model.hpp"

namespace {

std::ofstream open(const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.precision(10);
    return f;
}

}  // namespace

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: make_samples <dir>\n";
        return 2;
    }
    const std::string dir = argv[1];
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> n01;

    {
        // rho = 0.5, sigma2 = 1, eta ~ N(0, 4); N = 200, T = 6.
        const mile::DynPanelData d =
            mile::simulate_dyn(200, 6, 0.5, 1.0, mile::DynEffects::random_normal(4.0), mile::DynErrors::normal, rng);
        auto f = open(dir + "/dyn_panel.csv");
        f << "i,t,y\n";
        for (Eigen::Index i = 0; i < d.n(); ++i)
            for (Eigen::Index s = 0; s < d.t(); ++s) f << i + 1 << ',' << s + 1 << ',' << d.y(i, s) << '\n';
    }
    {
        // y = eta + 1.0 x1 - 0.5 x2 + u, AR(1) u with rho = 0.3; N = 150, T = 5.
        auto f = open(dir + "/static_panel.csv");
        f << "i,t,y,x1,x2\n";
        const double rho = 0.3;
        for (int i = 1; i <= 150; ++i) {
            const double eta = 2.0 * n01(rng);
            double u = n01(rng) / std::sqrt(1.0 - rho * rho);
            for (int s = 1; s <= 5; ++s) {
                if (s > 1) u = rho * u + n01(rng);
                const double x1 = n01(rng) + 0.5 * eta;
                const double x2 = n01(rng);
                f << i << ',' << s << ',' << eta + x1 - 0.5 * x2 + u << ',' << x1 << ',' << x2 << '\n';
            }
        }
    }
    {
        // exp(0.3 (x beta + u) + shift_i), beta = 1; N = 300, T = 3.
        auto f = open(dir + "/rank_panel.csv");
        f << "i,t,y,x1\n";
        for (int i = 1; i <= 300; ++i) {
            const double shift = 3.0 * n01(rng);
            for (int s = 1; s <= 3; ++s) {
                const double x = n01(rng);
                f << i << ',' << s << ',' << std::exp(0.3 * (x + n01(rng)) + shift) << ',' << x << '\n';
            }
        }
        open(dir + "/rank_config.json") << "{\"draws\": 2000}\n";
    }
    {
        // beta = 0.5, lambda = 1, K = 4, N = 400.
        const mile::SymMat sigma(Eigen::Matrix2d{{1.0, 0.5}, {0.5, 1.0}});
        const mile::IVData d = mile::simulate_iv(400, 4, 0.5, 1.0, sigma, rng);
        auto f = open(dir + "/iv.csv");
        f << "y1,y2,z1,z2,z3,z4\n";
        for (Eigen::Index i = 0; i < d.y1.size(); ++i) {
            f << d.y1(i) << ',' << d.y2(i);
            for (Eigen::Index k = 0; k < d.z.cols(); ++k) f << ',' << d.z(i, k);
            f << '\n';
        }
        open(dir + "/iv_config.json") << "{\"sigma\": [[1.0, 0.5], [0.5, 1.0]]}\n";
    }
    {
        auto f = open(dir + "/quick_design.json");
        f << "{\n  \"description\": \"small smoke design\",\n  \"rho_star\": 0.5,\n  \"effects\": \"random_normal\",\n"
             "  \"errors\": \"normal\",\n  \"N\": [25, 100],\n  \"T\": [2, 5],\n  \"reps\": 50,\n"
             "  \"estimators\": [\"mile\", \"bcols\", \"ab\", \"as\"],\n  \"seed\": 7\n}\n";
    }
    return 0;
}
