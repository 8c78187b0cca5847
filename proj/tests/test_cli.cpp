#include <doctest.h>

#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "bard/config.hpp"

using namespace bard;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(BARD_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string scratch(const std::string& name) {
    const auto p = fs::path(BARD_SCRATCH_DIR) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

Json json_tail(const std::string& out) {
    return Json::parse(out.substr(out.find('{')));
}

}  // namespace

TEST_CASE("cli simulate: CSV, trace and JSON agree with the library") {
    const auto dir = scratch("cli-sim");
    const auto csv = dir + "/oc.csv";
    const auto trace = dir + "/trace.jsonl";
    auto r = cli("simulate --scenario s2 --reps 200 --seed 17 --out " + csv + " --trace " + trace + " --json");
    REQUIRE(r.code == 0);
    const auto j = json_tail(r.out);
    auto ctx = std::make_shared<const DesignContext>(DesignConfig::bard_boin());
    const auto rep = replicate(ctx, *scenario_preset("s2"), TimingModel{}, 200, 17);
    CHECK(j["N"].get<double>() == doctest::Approx(rep.mean_n));
    CHECK(j["PCS1"].get<double>() == doctest::Approx(rep.pcs1));

    std::ifstream c(csv);
    std::string header, row;
    std::getline(c, header);
    std::getline(c, row);
    CHECK(header == oc_csv_header());
    CHECK(row == oc_csv_row(rep));
    std::ifstream t(trace);
    int lines = 0;
    for (std::string l; std::getline(t, l);) ++lines;
    CHECK(lines == 200);

    // parallelism does not change results
    auto p = cli("simulate --scenario s2 --reps 200 --seed 17 --parallelism 3 --json");
    CHECK(json_tail(p.out) == j);
}

TEST_CASE("cli simulate: errors and generated seed") {
    const auto dir = scratch("cli-err");
    {
        std::ofstream o(dir + "/bad.json");
        o << "{\n  \"run\": {\"reps\": 5,}\n}\n";
    }
    auto r = cli("simulate --config " + dir + "/bad.json");
    CHECK(r.code == 2);
    CHECK(r.out.find("bad.json:2:") != std::string::npos);
    r = cli("simulate --scenario s9 --reps 5");
    CHECK(r.code == 2);
    r = cli("simulate --scenario s3d1 --reps 5");  // 3-dose truth against a 5-dose design
    CHECK(r.code == 2);
    r = cli("simulate --scenario s1 --reps 20");
    CHECK(r.code == 0);
    CHECK(r.out.find("seed: ") != std::string::npos);
}

TEST_CASE("cli boundaries and scenarios") {
    auto r = cli("boundaries --phi 0.25 --ncap 12 --json");
    REQUIRE(r.code == 0);
    const auto j = json_tail(r.out);
    CHECK(j["lambda_e"].get<double>() == doctest::Approx(0.1968).epsilon(1e-3));
    CHECK(j["rows"].size() == 12);
    r = cli("boundaries");
    CHECK(r.out.find("eliminate if y >=") != std::string::npos);
    r = cli("scenarios --json");
    CHECK(Json::parse(r.out).size() == 12);
}

TEST_CASE("cli conduct: a trial through its directory") {
    const auto dir = scratch("cli-conduct") + "/trial";
    auto r = cli("conduct --dir " + dir + " create --seed 5");
    REQUIRE(r.code == 0);
    CHECK(cli("conduct --dir " + dir + " create").code == 5);  // already exists
    for (int i = 0; i < 3; ++i) {
        r = cli("conduct --dir " + dir + " enroll --covariates 1,0,1");
        REQUIRE(r.code == 0);
        CHECK(json_tail(r.out)["assignment"]["dose"] == 1);
    }
    const auto log = dir + "/events.jsonl";
    const auto size_before = fs::file_size(log);
    r = cli("conduct --dir " + dir + " outcome --patient 9 --dlt 0");
    CHECK(r.code == 4);
    CHECK(fs::file_size(log) == size_before);  // nothing written
    CHECK(cli("conduct --dir " + dir + " enroll --covariates 1,x").code == 2);
    for (int p = 1; p <= 3; ++p)
        CHECK(cli("conduct --dir " + dir + " outcome --patient " + std::to_string(p) + " --dlt 0 --response 1").code == 0);
    r = cli("conduct --dir " + dir + " status");
    CHECK(json_tail(r.out)["current_dose"] == 2);
    CHECK(cli("conduct --dir " + dir + " advance").code == 5);
    CHECK(cli("conduct --dir " + dir + " report").code == 5);
    CHECK(cli("conduct --dir " + dir + " verify").code == 0);

    // corrupt line 3: the error names the sequence number
    std::vector<std::string> lines;
    {
        std::ifstream in(log);
        for (std::string l; std::getline(in, l);) lines.push_back(l);
    }
    lines[2] = "garbage";
    {
        std::ofstream out(log);
        for (const auto& l : lines) out << l << "\n";
    }
    r = cli("conduct --dir " + dir + " status");
    CHECK(r.code == 6);
    CHECK(r.out.find("event 3") != std::string::npos);
}

TEST_CASE("cli serve: HTTP round trip") {
    const auto dir = scratch("cli-serve");
    const int port = 18000 + static_cast<int>(getpid() % 2000);
    const pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        setenv("BARD_API_TOKEN", "tok", 1);
        if (!freopen("/dev/null", "w", stdout)) _exit(126);
        const std::string p = std::to_string(port);
        execl(BARD_CLI_PATH, BARD_CLI_PATH, "serve", "--port", p.c_str(), "--data-dir", dir.c_str(),
              static_cast<char*>(nullptr));
        _exit(127);
    }
    httplib::Client client("127.0.0.1", port);
    client.set_bearer_token_auth("tok");
    bool up = false;
    for (int i = 0; i < 100 && !up; ++i) {
        if (auto res = client.Get("/health"); res && res->status == 200) up = true;
        else std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    CHECK(up);
    if (up) {
        auto res = client.Post("/trials", R"({"design":"bard-boin","trial_id":"H1","seed":1})",
                               "application/json");
        REQUIRE(res);
        CHECK(res->status == 201);
        res = client.Post("/trials/H1/patients", R"({"covariates":[0,1,0]})", "application/json");
        REQUIRE(res);
        CHECK(res->status == 201);
        res = client.Get("/trials/H1/nothing");
        REQUIRE(res);
        CHECK(res->status == 404);
        CHECK(res->get_header_value("Content-Type") == "application/problem+json");
        httplib::Client anon("127.0.0.1", port);
        res = anon.Get("/trials/H1/state");
        REQUIRE(res);
        CHECK(res->status == 401);
    }
    kill(pid, SIGTERM);
    waitpid(pid, nullptr, 0);
    CHECK(fs::exists(fs::path(dir) / "trials" / "H1" / "events.jsonl"));
}
