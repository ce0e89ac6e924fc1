#include "selfpath/runio.hpp"

#include "selfpath/common.hpp"

#include <json.hpp>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace selfpath {

int pipeline_workers() {
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("SELFPATH_WORKERS")) {
        const int cap = std::atoi(env);
        if (cap > 0) n = std::min(n, cap);
    }
    return std::max(1, n);
}

}  // namespace selfpath

namespace selfpath::runio {

std::string code_version() {
#ifdef SELFPATH_GIT_REV
    return SELFPATH_GIT_REV;
#else
    return "untracked";
#endif
}

std::string run_hash_hex(const std::string& canonical_config, uint64_t seed) {
    uint64_t h = fnv1a64(canonical_config);
    h = fnv1a64(&seed, sizeof(seed), h);
    const std::string ver = code_version();
    h = fnv1a64(ver, h);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string prepare_run_dir(const std::string& out_root, const std::string& hash) {
    const std::filesystem::path dir = std::filesystem::path(out_root) / hash;
    std::filesystem::create_directories(dir);
    return dir.string();
}

void write_run_record(const std::string& run_dir, const std::string& config_snapshot,
                      uint64_t seed, const std::vector<std::string>& outputs) {
    nlohmann::json rec;
    rec["config"] = nlohmann::json::parse(config_snapshot);
    rec["seed"] = seed;
    rec["code_version"] = code_version();
    rec["outputs"] = outputs;
    const auto now = std::chrono::system_clock::now();
    rec["wall_clock_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    std::ofstream f(std::filesystem::path(run_dir) / "runrecord.json");
    if (!f) throw DataError("runrecord: cannot open " + run_dir + "/runrecord.json");
    f << rec.dump(2) << "\n";
}

}  // namespace selfpath::runio
