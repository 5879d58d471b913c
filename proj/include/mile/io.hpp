#pragma once

// File formats for the command-line tool.
//   panels (static, rank, dyn): long CSV with header i,t,y[,x_1..x_K]
//   iv: wide CSV with header y1,y2,z_1..z_K
//   sidecar JSON: {"sigma": [[s11, s12], [s12, s22]]} for iv, {"draws": R} for rank
//   simulation designs: JSON, see design_from_json
// Errors are reported as InputError with the offending line number.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mile/dyn_panel.hpp"
#include "mile/iv_model.hpp"
#include "mile/montecarlo.hpp"
#include "mile/rank_transform.hpp"
#include "mile/static_panel.hpp"

namespace mile {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<int> line;  // source line of each row
    std::string source;

    std::string where(std::size_t row) const { return source + ":" + std::to_string(line[row]); }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, const std::string& where)
{
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw InputError(where + ": '" + s + "' is not a finite number");
    }
    return v;
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in, const std::string& source)
{
    CsvTable t;
    t.source = source;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string body = detail::trim(line);
        if (body.empty() || body[0] == '#') continue;
        const std::vector<std::string> cells = detail::split_csv_line(body);
        if (t.header.empty()) {
            t.header = cells;
            continue;
        }
        const std::string where = source + ":" + std::to_string(lineno);
        if (cells.size() != t.header.size()) {
            throw InputError(where + ": expected " + std::to_string(t.header.size()) + " fields, found " +
                             std::to_string(cells.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(detail::parse_number(c, where));
        t.rows.push_back(std::move(row));
        t.line.push_back(lineno);
    }
    if (t.header.empty()) throw InputError(source + ": empty file");
    if (t.rows.empty()) throw InputError(source + ": no data rows");
    return t;
}

inline CsvTable read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError(path + ": cannot open file");
    return parse_csv(in, path);
}

inline nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError(path + ": cannot open file");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

// Balanced long panel: y is N x T and x holds one T x K block per individual.
// Individuals keep their order of first appearance; periods are sorted by t.
struct LongPanel {
    Eigen::MatrixXd y;
    std::vector<Eigen::MatrixXd> x;
};

inline LongPanel long_panel_from_csv(const CsvTable& csv)
{
    const auto& h = csv.header;
    if (h.size() < 3 || h[0] != "i" || h[1] != "t" || h[2] != "y") {
        throw InputError(csv.source + ":1: header must start with i,t,y");
    }
    const std::size_t k = h.size() - 3;

    std::vector<double> ids;
    std::map<double, std::map<double, std::size_t>> by_id;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const double id = csv.rows[r][0];
        const double period = csv.rows[r][1];
        if (!by_id.count(id)) ids.push_back(id);
        if (!by_id[id].emplace(period, r).second) throw InputError(csv.where(r) + ": duplicate (i, t) pair");
    }
    const auto& first = by_id[ids.front()];
    const Eigen::Index t = static_cast<Eigen::Index>(first.size());
    LongPanel p{Eigen::MatrixXd(static_cast<Eigen::Index>(ids.size()), t), {}};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& periods = by_id[ids[i]];
        const std::size_t some_row = periods.begin()->second;
        if (periods.size() != first.size() ||
            !std::equal(periods.begin(), periods.end(), first.begin(), [](const auto& a, const auto& b) { return a.first == b.first; })) {
            throw InputError(csv.where(some_row) + ": unbalanced panel, individual " + format_number(ids[i]) +
                             " does not have the same periods as the first individual");
        }
        Eigen::MatrixXd xi(t, static_cast<Eigen::Index>(k));
        Eigen::Index s = 0;
        for (const auto& [period, row] : periods) {
            p.y(static_cast<Eigen::Index>(i), s) = csv.rows[row][2];
            for (std::size_t a = 0; a < k; ++a) xi(s, static_cast<Eigen::Index>(a)) = csv.rows[row][3 + a];
            ++s;
        }
        if (k > 0) p.x.push_back(std::move(xi));
    }
    return p;
}

inline IVData iv_from_csv(const CsvTable& csv, const SymMat& sigma)
{
    const auto& h = csv.header;
    if (h.size() < 3 || h[0] != "y1" || h[1] != "y2") throw InputError(csv.source + ":1: header must be y1,y2,z_1..z_K");
    const Eigen::Index n = static_cast<Eigen::Index>(csv.rows.size());
    const Eigen::Index k = static_cast<Eigen::Index>(h.size()) - 2;
    IVData d{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::MatrixXd(n, k), sigma};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = csv.rows[static_cast<std::size_t>(i)];
        d.y1(i) = row[0];
        d.y2(i) = row[1];
        for (Eigen::Index a = 0; a < k; ++a) d.z(i, a) = row[static_cast<std::size_t>(2 + a)];
    }
    return d;
}

inline SymMat sigma_from_json(const nlohmann::json& j, const std::string& source)
{
    if (!j.contains("sigma")) throw InputError(source + ": the iv model needs \"sigma\" (2 x 2 reduced-form covariance)");
    const auto& s = j.at("sigma");
    Eigen::Matrix2d m;
    try {
        if (!s.is_array() || s.size() != 2 || s[0].size() != 2 || s[1].size() != 2) throw InputError("");
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) m(r, c) = s[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    } catch (const std::exception&) {
        throw InputError(source + ": \"sigma\" must be a 2 x 2 array of numbers");
    }
    if (std::fabs(m(0, 1) - m(1, 0)) > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) {
        throw InputError(source + ": \"sigma\" must be symmetric");
    }
    SymMat sigma(m);
    if (!is_psd(sigma) || !(m.determinant() > 0.0)) throw InputError(source + ": \"sigma\" must be positive definite");
    return sigma;
}

// Design keys: rho_star, effects ("random_normal" | "nonconvergent"), errors
// ("normal" | "centered_chi_square"), N, T, reps, estimators, seed, and
// optionally sigma_star2 (1), effect_variance (4), gmm_skip_t (25, 0 = never).
inline McDesign design_from_json(const nlohmann::json& j, const std::string& source)
{
    auto fail = [&](const std::string& msg) -> InputError { return InputError(source + ": " + msg); };
    if (!j.is_object()) throw fail("design must be a JSON object");
    static const std::vector<std::string> known{"rho_star", "sigma_star2", "effects", "effect_variance", "errors", "N",
                                                "T", "reps", "estimators", "seed", "gmm_skip_t", "description"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) throw fail("unknown design key \"" + key + "\"");
    }
    for (const char* key : {"rho_star", "effects", "errors", "N", "T", "reps", "estimators", "seed"}) {
        if (!j.contains(key)) throw fail(std::string("missing design key \"") + key + "\"");
    }

    McDesign d;
    try {
        d.rho_star = j.at("rho_star").get<double>();
        d.sigma_star2 = j.value("sigma_star2", 1.0);
        const auto effects = j.at("effects").get<std::string>();
        if (effects == "random_normal") {
            d.effects = DynEffects::random_normal(j.value("effect_variance", 4.0));
        } else if (effects == "nonconvergent") {
            d.effects = DynEffects::nonconvergent();
        } else {
            throw fail("effects must be \"random_normal\" or \"nonconvergent\"");
        }
        const auto errors = j.at("errors").get<std::string>();
        if (errors == "normal") {
            d.errors = DynErrors::normal;
        } else if (errors == "centered_chi_square") {
            d.errors = DynErrors::centered_chi_square;
        } else {
            throw fail("errors must be \"normal\" or \"centered_chi_square\"");
        }
        auto int_list = [&](const char* key) {
            const auto& a = j.at(key);
            if (!a.is_array()) throw fail(std::string("\"") + key + "\" must be an array of integers");
            std::vector<Eigen::Index> out;
            for (const auto& v : a) {
                if (!v.is_number_integer()) throw fail(std::string("\"") + key + "\" must be an array of integers");
                out.push_back(v.get<Eigen::Index>());
            }
            return out;
        };
        d.n_list = int_list("N");
        d.t_list = int_list("T");
        if (!j.at("reps").is_number_integer()) throw fail("\"reps\" must be an integer");
        d.reps = j.at("reps").get<int>();
        d.estimators.clear();
        for (const auto& name : j.at("estimators").get<std::vector<std::string>>()) {
            if (name == "mile") d.estimators.push_back(McEstimator::mile);
            else if (name == "bcols") d.estimators.push_back(McEstimator::bcols);
            else if (name == "ab") d.estimators.push_back(McEstimator::ab);
            else if (name == "as") d.estimators.push_back(McEstimator::as);
            else throw fail("unknown estimator \"" + name + "\"");
        }
        if (!j.at("seed").is_number_unsigned()) throw fail("\"seed\" must be a non-negative integer");
        d.master_seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("gmm_skip_t") && !j.at("gmm_skip_t").is_number_integer()) throw fail("\"gmm_skip_t\" must be an integer");
        d.gmm_skip_t = j.value("gmm_skip_t", Eigen::Index{25});
    } catch (const nlohmann::json::exception& e) {
        throw fail(std::string("malformed design: ") + e.what());
    }
    try {
        d.validate();
    } catch (const DomainError& e) {
        throw fail(e.what());
    }
    return d;
}

namespace detail {

// Report numbers carry 6 significant digits, like the tables.
inline nlohmann::json sig6(double x)
{
    if (!std::isfinite(x)) return nullptr;
    return std::stod(format_number(x));
}

inline nlohmann::json sig6(const Eigen::VectorXd& v)
{
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(sig6(x));
    return a;
}

template <class Theta>
nlohmann::json report_common(const EstimateReport<Theta>& r)
{
    nlohmann::json j;
    j["objective"] = sig6(r.objective);
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["at_boundary"] = r.at_boundary;
    return j;
}

}  // namespace detail

inline nlohmann::json report_json(const EstimateReport<ThetaStatic>& r)
{
    nlohmann::json j = detail::report_common(r);
    j["model"] = "static";
    j["theta"] = {{"beta", detail::sig6(r.theta.beta)}, {"sigma2", detail::sig6(r.theta.sigma2)}, {"rho", detail::sig6(r.theta.rho)}};
    return j;
}

inline nlohmann::json report_json(const EstimateReport<ThetaRank>& r)
{
    nlohmann::json j = detail::report_common(r);
    j["model"] = "rank";
    j["theta"] = {{"beta", detail::sig6(r.theta.beta)}};
    return j;
}

inline nlohmann::json report_json(const EstimateReport<ThetaIV>& r)
{
    nlohmann::json j = detail::report_common(r);
    j["model"] = "iv";
    j["theta"] = {{"beta", detail::sig6(r.theta.beta)}, {"lambda", detail::sig6(r.theta.lambda)}};
    if (r.std_errors) j["std_errors"] = {{"beta", detail::sig6((*r.std_errors)[0])}, {"lambda", detail::sig6((*r.std_errors)[1])}};
    return j;
}

inline nlohmann::json report_json(const EstimateReport<ThetaDyn>& r)
{
    nlohmann::json j = detail::report_common(r);
    j["model"] = "dyn";
    j["theta"] = {{"rho", detail::sig6(r.theta.rho)}, {"sigma2", detail::sig6(r.theta.sigma2)}, {"lambda", detail::sig6(r.theta.lambda)}};
    if (r.std_errors) {
        j["std_errors"] = {{"rho", detail::sig6((*r.std_errors)[0])}, {"sigma2", detail::sig6((*r.std_errors)[1])},
                           {"lambda", detail::sig6((*r.std_errors)[2])}};
    }
    return j;
}

}  // namespace mile
