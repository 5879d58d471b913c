#pragma once

// Monte Carlo harness for the dynamic panel estimators. Every replication
// draws from its own generator seeded by a hash of (master seed, N, T, rep),
// so results do not depend on how work is split across threads.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mile/comparators.hpp"
#include "mile/dyn_panel.hpp"

namespace mile {

enum class McEstimator { mile, bcols, ab, as };

inline const char* estimator_name(McEstimator e)
{
    switch (e) {
    case McEstimator::mile: return "mile";
    case McEstimator::bcols: return "bcols";
    case McEstimator::ab: return "ab";
    case McEstimator::as: return "as";
    }
    return "?";
}

struct McDesign {
    double rho_star = 0.5;
    double sigma_star2 = 1.0;
    DynEffects effects = DynEffects::random_normal(4.0);
    DynErrors errors = DynErrors::normal;
    std::vector<Eigen::Index> n_list;
    std::vector<Eigen::Index> t_list;
    int reps = 1000;
    std::vector<McEstimator> estimators{McEstimator::mile, McEstimator::bcols, McEstimator::ab, McEstimator::as};
    std::uint64_t master_seed = 0;
    // AB and AS are skipped for T >= gmm_skip_t; 0 never skips.
    Eigen::Index gmm_skip_t = 25;

    // The N and T lists are only needed by run_design.
    void validate(bool need_grid = true) const
    {
        if (reps < 1) throw DomainError("McDesign: reps must be >= 1");
        if (!std::isfinite(rho_star)) throw DomainError("McDesign: rho_star must be finite");
        if (!(sigma_star2 > 0.0) || !std::isfinite(sigma_star2)) throw DomainError("McDesign: sigma_star2 must be positive");
        if (effects.kind == DynEffects::Kind::given) throw DomainError("McDesign: effects must be random_normal or nonconvergent");
        if (effects.kind == DynEffects::Kind::random_normal && !(effects.variance >= 0.0)) {
            throw DomainError("McDesign: effect variance must be >= 0");
        }
        if (need_grid && (n_list.empty() || t_list.empty())) throw DomainError("McDesign: N and T lists must be non-empty");
        for (auto n : n_list) {
            if (n < 1) throw DomainError("McDesign: all N must be >= 1");
        }
        for (auto t : t_list) {
            if (t < 1) throw DomainError("McDesign: all T must be >= 1");
        }
        if (estimators.empty()) throw DomainError("McDesign: no estimators requested");
        if (gmm_skip_t < 0) throw DomainError("McDesign: gmm_skip_t must be >= 0");
    }
};

enum class McStatus { ok, unavailable, skipped };

struct McEstimatorStats {
    McEstimator estimator = McEstimator::mile;
    McStatus status = McStatus::ok;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double mse = std::numeric_limits<double>::quiet_NaN();
    int n_failed = 0;
    int reps = 0;

    bool flagged() const { return status == McStatus::ok && 20 * n_failed > reps; }
};

struct McCellResult {
    Eigen::Index n = 0;
    Eigen::Index t = 0;
    std::vector<McEstimatorStats> stats;  // same order as design.estimators
    double seconds = 0.0;                 // summed over replications, not elapsed
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t replication_seed(std::uint64_t master, Eigen::Index n, Eigen::Index t, int rep)
{
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ static_cast<std::uint64_t>(n));
    h = splitmix64(h ^ static_cast<std::uint64_t>(t));
    return splitmix64(h ^ static_cast<std::uint64_t>(rep));
}

inline McStatus estimator_status(const McDesign& design, McEstimator e, Eigen::Index t)
{
    if (e == McEstimator::ab || e == McEstimator::as) {
        if (t < 3) return McStatus::unavailable;
        if (design.gmm_skip_t > 0 && t >= design.gmm_skip_t) return McStatus::skipped;
    }
    return McStatus::ok;
}

namespace detail {

// NaN marks a failed replication.
inline double run_estimator(McEstimator e, const DynPanelData& data)
{
    try {
        switch (e) {
        case McEstimator::mile: return mile_dyn(data).theta.rho;
        case McEstimator::bcols: return bcols(data).rho;
        case McEstimator::ab: return arellano_bond(data).rho;
        case McEstimator::as: return ahn_schmidt(data).rho;
        }
    } catch (const NumericError&) {
    } catch (const DomainError&) {
    }
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

// Draws replication r of cell (n, t) and returns one estimate per requested
// estimator (NaN when it failed or is not run).
inline std::vector<double> run_replication(const McDesign& design, Eigen::Index n, Eigen::Index t, int rep)
{
    std::mt19937_64 rng(replication_seed(design.master_seed, n, t, rep));
    const DynPanelData data = simulate_dyn(n, t, design.rho_star, design.sigma_star2, design.effects, design.errors, rng);
    std::vector<double> out;
    out.reserve(design.estimators.size());
    for (McEstimator e : design.estimators) {
        out.push_back(estimator_status(design, e, t) == McStatus::ok ? detail::run_estimator(e, data)
                                                                     : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

inline std::vector<McCellResult> run_cells(const McDesign& design,
                                           const std::vector<std::pair<Eigen::Index, Eigen::Index>>& cells,
                                           unsigned threads = 0)
{
    design.validate(false);
    for (const auto& [n, t] : cells) {
        if (n < 1 || t < 1) throw DomainError("run_cells: need N >= 1 and T >= 1");
    }
    const std::size_t n_est = design.estimators.size();
    const std::size_t reps = static_cast<std::size_t>(design.reps);
    std::vector<double> values(cells.size() * reps * n_est);
    std::vector<double> seconds(cells.size() * reps, 0.0);

    std::atomic<std::size_t> next{0};
    const std::size_t total = cells.size() * reps;
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= total) return;
            const std::size_t c = k / reps;
            const int r = static_cast<int>(k % reps) + 1;
            try {
                const auto start = std::chrono::steady_clock::now();
                const std::vector<double> v = run_replication(design, cells[c].first, cells[c].second, r);
                seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                std::copy(v.begin(), v.end(), values.begin() + static_cast<std::ptrdiff_t>(k * n_est));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(total);
                return;
            }
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(total, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    // Fixed-order reduction.
    std::vector<McCellResult> out;
    out.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        McCellResult cell{cells[c].first, cells[c].second, {}, 0.0};
        for (std::size_t r = 0; r < reps; ++r) cell.seconds += seconds[c * reps + r];
        for (std::size_t j = 0; j < n_est; ++j) {
            McEstimatorStats s;
            s.estimator = design.estimators[j];
            s.status = estimator_status(design, s.estimator, cell.t);
            s.reps = design.reps;
            if (s.status == McStatus::ok) {
                double sum = 0.0;
                double sq = 0.0;
                int ok = 0;
                for (std::size_t r = 0; r < reps; ++r) {
                    const double v = values[(c * reps + r) * n_est + j];
                    if (!std::isfinite(v)) {
                        ++s.n_failed;
                        continue;
                    }
                    sum += v;
                    sq += (v - design.rho_star) * (v - design.rho_star);
                    ++ok;
                }
                if (ok > 0) {
                    s.mean = sum / ok;
                    s.mse = sq / ok;
                }
            }
            cell.stats.push_back(s);
        }
        out.push_back(std::move(cell));
    }
    return out;
}

inline McCellResult run_cell(const McDesign& design, Eigen::Index n, Eigen::Index t, unsigned threads = 0)
{
    return run_cells(design, {{n, t}}, threads).front();
}

// Rows in table order: T outer, N inner.
inline std::vector<McCellResult> run_design(const McDesign& design, unsigned threads = 0)
{
    design.validate();
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
    for (auto t : design.t_list) {
        for (auto n : design.n_list) cells.emplace_back(n, t);
    }
    return run_cells(design, cells, threads);
}

enum class TableFormat { csv, markdown };

inline TableFormat parse_table_format(const std::string& s)
{
    if (s == "csv") return TableFormat::csv;
    if (s == "markdown" || s == "md") return TableFormat::markdown;
    throw InputError("unknown table format '" + s + "' (expected csv or markdown)");
}

inline std::string format_number(double x)
{
    if (std::isnan(x)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

namespace detail {

inline std::vector<std::string> table_row(const McCellResult& cell)
{
    std::vector<std::string> row{std::to_string(cell.t), std::to_string(cell.n)};
    for (const auto& s : cell.stats) {
        if (s.status != McStatus::ok) {
            const std::string mark = s.status == McStatus::unavailable ? "*" : "**";
            row.insert(row.end(), {mark, mark, mark});
        } else {
            row.insert(row.end(), {format_number(s.mean), format_number(s.mse), std::to_string(s.n_failed)});
        }
    }
    return row;
}

}  // namespace detail

// Columns: T, N, then mean_/mse_/failed_ for each estimator. The estimator
// list is taken from `estimators` so an empty result set still has a header.
inline std::string render_table(const std::vector<McCellResult>& results, const std::vector<McEstimator>& estimators,
                                TableFormat format)
{
    std::vector<std::string> header{"T", "N"};
    for (McEstimator e : estimators) {
        const std::string name = estimator_name(e);
        header.insert(header.end(), {"mean_" + name, "mse_" + name, "failed_" + name});
    }
    for (const auto& cell : results) {
        if (cell.stats.size() != estimators.size()) throw DomainError("render_table: result does not match estimator list");
    }

    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& cols) {
        if (format == TableFormat::csv) {
            for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
            os << '\n';
        } else {
            os << '|';
            for (const auto& c : cols) os << ' ' << c << " |";
            os << '\n';
        }
    };
    emit(header);
    if (format == TableFormat::markdown) emit(std::vector<std::string>(header.size(), "---"));
    for (const auto& cell : results) emit(detail::table_row(cell));

    if (format == TableFormat::markdown) {
        bool any_na = false;
        bool any_skip = false;
        std::vector<std::string> flagged;
        for (const auto& cell : results) {
            for (const auto& s : cell.stats) {
                any_na |= s.status == McStatus::unavailable;
                any_skip |= s.status == McStatus::skipped;
                if (s.flagged()) {
                    flagged.push_back(std::string(estimator_name(s.estimator)) + " at T=" + std::to_string(cell.t) +
                                      ", N=" + std::to_string(cell.n));
                }
            }
        }
        if (any_na || any_skip || !flagged.empty()) os << '\n';
        if (any_na) os << "(*) not available for T < 3.\n";
        if (any_skip) os << "(**) skipped for large T.\n";
        if (!flagged.empty()) {
            os << "(!) more than 5% of replications failed:";
            for (std::size_t i = 0; i < flagged.size(); ++i) os << (i ? "; " : " ") << flagged[i];
            os << '\n';
        }
    }
    return os.str();
}

}  // namespace mile
