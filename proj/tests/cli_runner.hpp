#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

// Runs the tiedlab executable through the shell and captures stdout.
// TIEDLAB_EXE and TIEDLAB_CONFIGS are injected by CMake.

struct CliRun {
    int exit_code = -1;
    std::string out;
};

inline CliRun run_tiedlab(const std::string& args, bool discard_stderr = true) {
    const std::string cmd = std::string("\"") + TIEDLAB_EXE + "\" " + args + (discard_stderr ? " 2>/dev/null" : " 2>&1");
    CliRun r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t got = 0;
    while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

inline std::string config_path(const std::string& name) { return std::string(TIEDLAB_CONFIGS) + "/" + name; }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }
