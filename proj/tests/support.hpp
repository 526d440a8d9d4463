#pragma once

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "its/util.hpp"

namespace its::testing {

namespace fs = std::filesystem;

inline fs::path source_dir() { return ITS_SOURCE_DIR; }
inline fs::path fixture(const std::string& rel) { return source_dir() / "tests" / "fixtures" / rel; }

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "its-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

struct ProcessResult {
  int exit_code = -1;
  int signal = 0;
  std::string out;
  std::string err;
};

// Child process with stdout/stderr captured to files. An empty env value
// unsets the variable.
class Process {
 public:
  Process(const std::vector<std::string>& argv, const fs::path& capture_dir,
          const std::map<std::string, std::string>& env = {}) {
    static int counter = 0;
    const auto id = std::to_string(getpid()) + "-" + std::to_string(counter++);
    out_path_ = capture_dir / ("proc-" + id + ".out");
    err_path_ = capture_dir / ("proc-" + id + ".err");
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
      const int out = open(out_path_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      const int err = open(err_path_.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      dup2(out, 1);
      dup2(err, 2);
      for (const auto& [k, v] : env) {
        if (v.empty()) {
          unsetenv(k.c_str());
        } else {
          setenv(k.c_str(), v.c_str(), 1);
        }
      }
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      execv(args[0], args.data());
      _exit(127);
    }
  }
  ~Process() {
    if (pid_ > 0 && !done_) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
  }
  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;

  pid_t pid() const { return pid_; }
  void signal(int sig) { kill(pid_, sig); }

  ProcessResult wait() {
    int status = 0;
    waitpid(pid_, &status, 0);
    done_ = true;
    ProcessResult r;
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    if (WIFSIGNALED(status)) r.signal = WTERMSIG(status);
    r.out = read_file(out_path_);
    r.err = read_file(err_path_);
    return r;
  }

  std::string current_stdout() const {
    std::error_code ec;
    return fs::exists(out_path_, ec) ? read_file(out_path_) : std::string{};
  }

 private:
  pid_t pid_ = -1;
  bool done_ = false;
  fs::path out_path_;
  fs::path err_path_;
};

inline ProcessResult run_process(const std::vector<std::string>& argv, const fs::path& capture_dir,
                                 const std::map<std::string, std::string>& env = {}) {
  Process p(argv, capture_dir, env);
  return p.wait();
}

inline std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace its::testing
