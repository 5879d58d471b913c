#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;  // stdout and stderr together
};

CliResult run(const std::string& args, bool merge_stderr = true)
{
    const std::string cmd = std::string(MILE_CLI) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
    CliResult r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string sample(const std::string& name) { return std::string(MILE_SAMPLES) + "/" + name; }

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "mile_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

fs::path write(const std::string& name, const std::string& text)
{
    const fs::path p = scratch(name);
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(CliEstimate, DynOnSimulatedPanel)
{
    // samples/dyn_panel.csv was drawn with rho = 0.5, N = 200, T = 6.
    const CliResult r = run("estimate --model dyn --input " + sample("dyn_panel.csv"), false);
    ASSERT_EQ(r.code, 0) << r.out;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["model"], "dyn");
    EXPECT_TRUE(j["converged"].get<bool>());
    const double rho = j["theta"]["rho"].get<double>();
    const double se = j["std_errors"]["rho"].get<double>();
    EXPECT_GT(se, 0.0);
    EXPECT_LT(std::fabs(rho - 0.5), 3.0 * se) << rho << " se " << se;
}

TEST(CliEstimate, IvStaticAndOutputFile)
{
    const CliResult iv = run("estimate --model iv --input " + sample("iv.csv") + " --config " + sample("iv_config.json"), false);
    ASSERT_EQ(iv.code, 0) << iv.out;
    const auto j = nlohmann::json::parse(iv.out);
    EXPECT_LT(std::fabs(j["theta"]["beta"].get<double>() - 0.5), 3.0 * j["std_errors"]["beta"].get<double>());

    const fs::path out = scratch("static.json");
    fs::remove(out);
    const CliResult st = run("estimate --model static --input " + sample("static_panel.csv") + " -o " + out.string());
    ASSERT_EQ(st.code, 0) << st.out;
    const auto s = nlohmann::json::parse(slurp(out));
    EXPECT_EQ(s["theta"]["beta"].size(), 2u);
    EXPECT_NEAR(s["theta"]["beta"][0].get<double>(), 1.0, 0.15);
    EXPECT_NEAR(s["theta"]["beta"][1].get<double>(), -0.5, 0.15);
}

TEST(CliEstimate, InputErrorsExitTwo)
{
    CliResult r = run("estimate --model dyn --input /nonexistent/panel.csv");
    EXPECT_EQ(r.code, 2);

    r = run("estimate --model iv --input " + sample("iv.csv"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("needs --config with \"sigma\""), std::string::npos) << r.out;

    const fs::path bad = write("bad.csv", "i,t,y\n1,1,0.5\n1,2,oops\n");
    r = run("estimate --model dyn --input " + bad.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("bad.csv:3:"), std::string::npos) << r.out;

    r = run("estimate --model probit --input " + sample("dyn_panel.csv"));
    EXPECT_EQ(r.code, 2);

    r = run("estimate --model dyn --input " + sample("static_panel.csv"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("takes no regressors"), std::string::npos) << r.out;

    const fs::path side = write("bad_sigma.json", "{\"sigma\": [[1, 2], [2, 1]]}");
    r = run("estimate --model iv --input " + sample("iv.csv") + " --config " + side.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("positive definite"), std::string::npos) << r.out;
}

TEST(CliEstimate, NumericFailureExitsThree)
{
    // Identical paths give W of rank one, where the dyn estimator is undefined.
    const fs::path flat = write("flat.csv", "i,t,y\n1,1,1\n1,2,2\n2,1,1\n2,2,2\n3,1,1\n3,2,2\n");
    const CliResult r = run("estimate --model dyn --input " + flat.string());
    EXPECT_EQ(r.code, 3) << r.out;
}

TEST(CliSimulate, DeterministicBytesAcrossRunsAndThreads)
{
    const fs::path a = scratch("a.csv");
    const fs::path b = scratch("b.csv");
    ASSERT_EQ(run("simulate --design " + sample("quick_design.json") + " --threads 1 -o " + a.string()).code, 0);
    ASSERT_EQ(run("simulate --design " + sample("quick_design.json") + " --threads 3 -o " + b.string()).code, 0);
    const std::string csv = slurp(a);
    EXPECT_EQ(csv, slurp(b));
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "T,N,mean_mile,mse_mile,failed_mile,mean_bcols,mse_bcols,failed_bcols,mean_ab,mse_ab,failed_ab,mean_as,mse_as,"
              "failed_as");

    const CliResult other = run("simulate --design " + sample("quick_design.json") + " --seed 8", false);
    EXPECT_EQ(other.code, 0);
    EXPECT_NE(other.out, csv);

    const CliResult md = run("simulate --design " + sample("quick_design.json") + " --reps 5 --format markdown", false);
    EXPECT_EQ(md.code, 0);
    EXPECT_EQ(md.out.rfind("| T | N |", 0), 0u) << md.out;
}

TEST(CliSimulate, InvalidDesignsExitTwo)
{
    EXPECT_EQ(run("simulate --design " + sample("quick_design.json") + " --reps 0").code, 2);
    const fs::path zero = write("zero.json", R"({"rho_star": 0.5, "effects": "random_normal", "errors": "normal",
        "N": [5], "T": [2], "reps": 0, "estimators": ["mile"], "seed": 1})");
    const CliResult r = run("simulate --design " + zero.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("reps must be >= 1"), std::string::npos) << r.out;
    EXPECT_EQ(run("simulate --design " + write("broken.json", "{").string()).code, 2);
    EXPECT_EQ(run("simulate --design " + sample("quick_design.json") + " --format xml").code, 2);
    EXPECT_EQ(run("").code, 2);
}

TEST(CliSimulate, BundledDesignsParse)
{
    for (int k = 1; k <= 5; ++k) {
        const std::string path = std::string(MILE_DESIGNS) + "/table" + std::to_string(k) + ".json";
        // One replication over a two-cell slice keeps this quick.
        const fs::path slice = scratch("slice.json");
        auto j = nlohmann::json::parse(slurp(path));
        j["N"] = {5};
        j["T"] = {2, 3};
        std::ofstream(slice) << j.dump();
        const CliResult r = run("simulate --design " + slice.string() + " --reps 1", false);
        EXPECT_EQ(r.code, 0) << path;
    }
}

TEST(CliCheck, AllItemsPass)
{
    const CliResult r = run("check", false);
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
    EXPECT_GE(std::count(r.out.begin(), r.out.end(), '\n'), 8);
}
