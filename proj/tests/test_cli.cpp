// End-to-end tests for the feddtpt command-line tool. Each case launches the
// real binary in a shell, captures interleaved stdout/stderr, and asserts on
// the exit code and on the files the command leaves behind.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr const char* kCli = FEDDTPT_CLI_PATH;
const fs::path kFixtures = FEDDTPT_FIXTURE_DIR;

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr, interleaved
};

CliResult run_shell(const std::string& command) {
    FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult result;
    char buffer[4096];
    size_t got = 0;
    while ((got = std::fread(buffer, 1, sizeof buffer, pipe)) > 0)
        result.output.append(buffer, got);
    int status = ::pclose(pipe);
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    return result;
}

CliResult run_cli(const std::string& args) {
    return run_shell(std::string(kCli) + " " + args);
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "feddtpt_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream stream(text);
    std::string line;
    while (std::getline(stream, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> tokens_of(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream stream(line);
    std::string token;
    while (stream >> token) tokens.push_back(token);
    return tokens;
}

// A small single-round experiment over the bundled fixtures. Paths are
// absolute so the config can live in a temp directory.
std::string smoke_config(const std::string& extra_run_keys = "") {
    std::ostringstream config;
    config << "[data]\n"
           << "path = " << (kFixtures / "sentiment.tsv").string() << "\n"
           << "k_shot = 4\n"
           << "public_per_class = 1\n"
           << "\n"
           << "[clients]\n"
           << "count = 3\n"
           << "max_iterations = 3\n"
           << "batch_size = 8\n"
           << "num_candidates = 4\n"
           << "partition = iid\n"
           << "\n"
           << "[backends]\n"
           << "prediction_rules = " << (kFixtures / "mock_rules.json").string() << "\n"
           << "mlm_vocab = " << (kFixtures / "vocab.txt").string() << "\n"
           << "embeddings = " << (kFixtures / "embeddings.txt").string() << "\n"
           << "\n"
           << "[run]\n"
           << "rounds = 1\n"
           << "seed = 3\n"
           << "seed_prompt = just judge the overall sentiment\n"
           << "verbalizer = 0:<negative>;1:<positive>\n"
           << extra_run_keys;
    return config.str();
}

}  // namespace

TEST_CASE("run --mock writes report, prompt, and traces") {
    fs::path dir = fresh_dir("run_smoke");
    fs::path config = dir / "experiment.ini";
    write_file(config, smoke_config());
    fs::path out = dir / "out";

    CliResult result =
        run_cli("run --config " + config.string() + " --mock --out " + out.string());
    CAPTURE(result.output);
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("final prompt:") != std::string::npos);
    CHECK(result.output.find("best validation accuracy:") != std::string::npos);

    REQUIRE(fs::exists(out / "report.json"));
    REQUIRE(fs::exists(out / "final_prompt.txt"));
    for (int client = 0; client < 3; ++client)
        CHECK(fs::exists(out / "traces" /
                         ("round1_client" + std::to_string(client) + ".jsonl")));

    nlohmann::json report = nlohmann::json::parse(read_file(out / "report.json"));
    CHECK(report.at("rounds").size() == 1);
    CHECK(report.at("aborted").get<bool>() == false);
    std::string final_prompt = report.at("final_prompt").get<std::string>();
    CHECK_FALSE(final_prompt.empty());
    CHECK(read_file(out / "final_prompt.txt") == final_prompt + "\n");
}

TEST_CASE("run rejects ambiguous backend selection") {
    fs::path dir = fresh_dir("run_flags");
    fs::path config = dir / "experiment.ini";
    write_file(config, smoke_config());

    CliResult both = run_cli("run --config " + config.string() + " --mock --live");
    CHECK(both.exit_code == 2);
    CHECK(both.output.find("exactly one of --mock or --live") != std::string::npos);

    CliResult neither = run_cli("run --config " + config.string());
    CHECK(neither.exit_code == 2);
    CHECK(neither.output.find("exactly one of --mock or --live") != std::string::npos);
}

TEST_CASE("run reports unknown config keys by name") {
    fs::path dir = fresh_dir("run_bad_key");
    fs::path config = dir / "experiment.ini";
    write_file(config, smoke_config("turbo = 1\n"));

    CliResult result = run_cli("run --config " + config.string() + " --mock");
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("turbo") != std::string::npos);
}

TEST_CASE("run --live without an API key fails with exit code 2") {
    fs::path dir = fresh_dir("run_live_no_key");
    fs::path config = dir / "experiment.ini";
    write_file(config, smoke_config("")
                           + "\n[backends]\n"
                             "prediction_url = http://127.0.0.1:9/v1/chat\n"
                             "mlm_url = http://127.0.0.1:9/v1/fill\n");

    CliResult result = run_shell("env -u FEDDTPT_API_KEY " + std::string(kCli) +
                                 " run --config " + config.string() + " --live");
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("FEDDTPT_API_KEY") != std::string::npos);
}

TEST_CASE("partition --iid prints a class histogram and writes shards") {
    fs::path dir = fresh_dir("partition_iid");
    fs::path out = dir / "partition.json";

    CliResult result = run_cli("partition --data " + (kFixtures / "sentiment.tsv").string() +
                               " --clients 4 --iid --seed 3 --out " + out.string());
    CAPTURE(result.output);
    REQUIRE(result.exit_code == 0);

    std::vector<std::string> lines = lines_of(result.output);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "client\tclass0\tclass1\ttotal");
    int grand_total = 0;
    for (size_t row = 1; row < lines.size(); ++row) {
        std::vector<std::string> fields = tokens_of(lines[row]);
        REQUIRE(fields.size() == 4);
        CHECK(fields[0] == std::to_string(row - 1));
        CHECK(std::stoi(fields[1]) + std::stoi(fields[2]) == std::stoi(fields[3]));
        CHECK(std::stoi(fields[3]) == 16);  // 64 examples split evenly
        grand_total += std::stoi(fields[3]);
    }
    CHECK(grand_total == 64);

    nlohmann::json shards = nlohmann::json::parse(read_file(out));
    REQUIRE(shards.size() == 4);
    size_t assigned = 0;
    for (const auto& [client, ids] : shards.items()) assigned += ids.size();
    CHECK(assigned == 64);
}

TEST_CASE("partition --alpha covers every example across clients") {
    fs::path dir = fresh_dir("partition_dirichlet");
    fs::path out = dir / "partition.json";

    CliResult result = run_cli("partition --data " + (kFixtures / "sentiment.tsv").string() +
                               " --clients 4 --alpha 0.5 --seed 3 --out " + out.string());
    CAPTURE(result.output);
    REQUIRE(result.exit_code == 0);

    nlohmann::json shards = nlohmann::json::parse(read_file(out));
    REQUIRE(shards.size() == 4);
    size_t assigned = 0;
    for (const auto& [client, ids] : shards.items()) assigned += ids.size();
    CHECK(assigned == 64);
}

TEST_CASE("partition rejects invalid selector combinations") {
    std::string base = "partition --data " + (kFixtures / "sentiment.tsv").string() +
                       " --clients 4 --out /dev/null";

    CliResult zero_alpha = run_cli(base + " --alpha 0");
    CHECK(zero_alpha.exit_code == 2);
    CHECK(zero_alpha.output.find("--alpha must be > 0") != std::string::npos);

    CliResult both = run_cli(base + " --alpha 0.5 --iid");
    CHECK(both.exit_code == 2);
    CHECK(both.output.find("exactly one of --alpha or --iid") != std::string::npos);

    CliResult neither = run_cli(base);
    CHECK(neither.exit_code == 2);
    CHECK(neither.output.find("exactly one of --alpha or --iid") != std::string::npos);
}

TEST_CASE("aggregate returns identical prompts unchanged") {
    fs::path dir = fresh_dir("aggregate_identity");
    fs::path prompts = dir / "prompts.txt";
    write_file(prompts,
               "# one line per client\n"
               "0 just judge the overall sentiment\n"
               "1 just judge the overall sentiment\n");

    CliResult result = run_cli("aggregate --prompts " + prompts.string() +
                               " --strategy kmeans:5 --embeddings " +
                               (kFixtures / "embeddings.txt").string() + " --out " +
                               dir.string());
    CAPTURE(result.output);
    REQUIRE(result.exit_code == 0);
    CHECK(result.output == "just judge the overall sentiment\n");
    CHECK(read_file(dir / "global_prompt.txt") == "just judge the overall sentiment\n");

    nlohmann::json report = nlohmann::json::parse(read_file(dir / "aggregate_report.json"));
    CHECK(report.at("global_prompt").get<std::string>() ==
          "just judge the overall sentiment");
}

TEST_CASE("aggregate adaptive:2 collapses two embedding blobs to two tokens") {
    fs::path dir = fresh_dir("aggregate_adaptive");
    fs::path prompts = dir / "prompts.txt";
    fs::path embeddings = dir / "embeddings.txt";
    write_file(prompts, "0 t0 t2 t4\n1 t1 t3 t5\n");
    // Two well-separated blobs of three points each; 0.25 offsets stay exact
    // in binary floating point at both blob bases.
    write_file(embeddings,
               "t0 1 1\n"
               "t1 1.25 1\n"
               "t2 1 1.25\n"
               "t3 101 1\n"
               "t4 101.25 1\n"
               "t5 101 1.25\n");

    CliResult result = run_cli("aggregate --prompts " + prompts.string() +
                               " --strategy adaptive:2 --embeddings " + embeddings.string() +
                               " --out " + dir.string());
    CAPTURE(result.output);
    REQUIRE(result.exit_code == 0);

    std::vector<std::string> lines = lines_of(result.output);
    REQUIRE(lines.size() == 1);
    std::vector<std::string> tokens = tokens_of(lines[0]);
    CHECK(tokens.size() == 2);
    for (const std::string& token : tokens) {
        CHECK(token.size() == 2);
        CHECK(token[0] == 't');
    }
}

TEST_CASE("aggregate rejects fewer than two client prompts") {
    fs::path dir = fresh_dir("aggregate_single");
    fs::path prompts = dir / "prompts.txt";
    write_file(prompts, "0 just judge the overall sentiment\n");

    CliResult result = run_cli("aggregate --prompts " + prompts.string() +
                               " --embeddings " + (kFixtures / "embeddings.txt").string() +
                               " --out " + dir.string());
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("at least 2") != std::string::npos);
}

TEST_CASE("aggregate rejects malformed strategies and strict lookups") {
    fs::path dir = fresh_dir("aggregate_errors");
    fs::path prompts = dir / "prompts.txt";
    write_file(prompts, "0 zzz yyy\n1 zzz yyy\n");
    std::string base = "aggregate --prompts " + prompts.string() + " --embeddings " +
                       (kFixtures / "embeddings.txt").string() + " --out " + dir.string();

    CliResult strategy = run_cli(base + " --strategy magic");
    CHECK(strategy.exit_code == 2);
    CHECK(strategy.output.find("unknown strategy") != std::string::npos);

    // zzz/yyy are not in the fixture table, so fallback=error must fail while
    // the default hash fallback succeeds.
    CliResult strict = run_cli(base + " --fallback error");
    CHECK(strict.exit_code == 2);

    CliResult hashed = run_cli(base);
    CHECK(hashed.exit_code == 0);
}

TEST_CASE("evaluate scores a prompt against a mock backend") {
    CliResult result = run_cli("evaluate --prompt 'carefully precisely the overall sentiment'"
                               " --data " + (kFixtures / "sentiment.tsv").string() +
                               " --backend mock:" + (kFixtures / "mock_rules.json").string());
    CAPTURE(result.output);
    CHECK(result.exit_code == 0);
    CHECK(result.output == "1.0000\n");
}

TEST_CASE("evaluate reads the prompt from a file") {
    fs::path dir = fresh_dir("evaluate_prompt_file");
    fs::path prompt = dir / "prompt.txt";
    write_file(prompt, "carefully precisely the overall sentiment\n");

    CliResult result = run_cli("evaluate --prompt-file " + prompt.string() +
                               " --data " + (kFixtures / "sentiment.tsv").string() +
                               " --backend mock:" + (kFixtures / "mock_rules.json").string());
    CAPTURE(result.output);
    CHECK(result.exit_code == 0);
    CHECK(result.output == "1.0000\n");
}

TEST_CASE("evaluate labels per-backend accuracy when given several backends") {
    CliResult result = run_cli("evaluate --prompt 'carefully precisely the overall sentiment'"
                               " --data " + (kFixtures / "sentiment.tsv").string() +
                               " --backend mock:" + (kFixtures / "mock_rules.json").string() +
                               " --backend mock:" +
                               (kFixtures / "mock_rules_transfer.json").string());
    CAPTURE(result.output);
    CHECK(result.exit_code == 0);
    std::vector<std::string> lines = lines_of(result.output);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "sentiment-mock\t1.0000");
    CHECK(lines[1] == "sentiment-transfer\t1.0000");
}

TEST_CASE("evaluate rejects ambiguous prompt sources") {
    fs::path dir = fresh_dir("evaluate_ambiguous");
    fs::path prompt = dir / "prompt.txt";
    write_file(prompt, "judge\n");

    CliResult result = run_cli("evaluate --prompt judge --prompt-file " + prompt.string() +
                               " --data " + (kFixtures / "sentiment.tsv").string() +
                               " --backend mock:" + (kFixtures / "mock_rules.json").string());
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("exactly one of --prompt or --prompt-file") !=
          std::string::npos);
}

TEST_CASE("evaluate exits 4 when an HTTP backend is unreachable") {
    CliResult result = run_cli("evaluate --prompt judge"
                               " --data " + (kFixtures / "sentiment.tsv").string() +
                               " --backend http://127.0.0.1:9/v1/chat"
                               " --verbalizer '0:<negative>;1:<positive>'"
                               " --timeout-ms 200 --max-retries 0");
    CAPTURE(result.output);
    CHECK(result.exit_code == 4);
    CHECK(result.output.find("error:") != std::string::npos);
}

TEST_CASE("top-level argument errors exit with code 2") {
    CliResult none = run_cli("");
    CHECK(none.exit_code == 2);

    CliResult missing = run_cli("evaluate --prompt judge");
    CHECK(missing.exit_code == 2);

    CliResult help = run_cli("--help");
    CHECK(help.exit_code == 0);
    CHECK(help.output.find("run") != std::string::npos);
    CHECK(help.output.find("aggregate") != std::string::npos);
}
