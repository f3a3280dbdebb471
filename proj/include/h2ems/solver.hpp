#pragma once
// Solver transport. Models are shipped as MPS files to a Python helper that
// wraps a branch-and-bound backend; results come back as one JSON line per
// solve. Two flavours: a persistent server process (amortizes interpreter
// startup across a closed-loop run) and a one-shot subprocess.
//
// Candidate solutions are re-verified in C++ (bounds, integrality, rows, and
// the objective recomputed from the values) before being accepted.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "h2ems/common.hpp"
#include "h2ems/milp.hpp"

namespace h2ems {

inline std::string default_solver_script() {
  if (const char* env = std::getenv("H2EMS_SOLVER_SCRIPT")) return env;
#ifdef H2EMS_SOURCE_DIR
  return std::string(H2EMS_SOURCE_DIR) + "/scripts/solve_mps.py";
#else
  return "scripts/solve_mps.py";
#endif
}

namespace detail {

class ChildProcess {
 public:
  ChildProcess(const std::vector<std::string>& argv) {
    if (argv.empty()) throw Error("ChildProcess: empty argv");
    signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw SolverError("ChildProcess: pipe() failed");
    pid_ = fork();
    if (pid_ < 0) throw SolverError("ChildProcess: fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      std::vector<char*> cargv;
      for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
      cargv.push_back(nullptr);
      execvp(cargv[0], cargv.data());
      std::perror("execvp");
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    wfd_ = to_child[1];
    rfd_ = from_child[0];
    fcntl(rfd_, F_SETFL, O_NONBLOCK);
  }

  ~ChildProcess() {
    if (wfd_ >= 0) close(wfd_);
    if (rfd_ >= 0) close(rfd_);
    if (pid_ > 0) {
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == 0) {
        kill(pid_, SIGTERM);
        waitpid(pid_, &status, 0);
      }
    }
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  bool write_line(const std::string& line) {
    std::string s = line;
    s += '\n';
    size_t off = 0;
    while (off < s.size()) {
      ssize_t n = ::write(wfd_, s.data() + off, s.size() - off);
      if (n <= 0) return false;
      off += static_cast<size_t>(n);
    }
    return true;
  }

  // Reads one '\n'-terminated line, waiting up to deadline_s. Empty optional
  // on EOF/timeout.
  bool read_line(std::string& out, double deadline_s) {
    out.clear();
    const auto t0 = std::chrono::steady_clock::now();
    for (;;) {
      size_t nl = buf_.find('\n');
      if (nl != std::string::npos) {
        out = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return true;
      }
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const double remain = deadline_s - elapsed;
      if (remain <= 0.0) return false;
      struct pollfd pfd {
        rfd_, POLLIN, 0
      };
      int pr = poll(&pfd, 1, static_cast<int>(std::min(remain * 1000.0, 250.0)) + 1);
      if (pr < 0) return false;
      if (pr == 0) continue;
      char chunk[4096];
      ssize_t n = ::read(rfd_, chunk, sizeof(chunk));
      if (n == 0) return false;  // EOF
      if (n < 0) continue;       // EAGAIN
      buf_.append(chunk, static_cast<size_t>(n));
    }
  }

  bool alive() const {
    if (pid_ <= 0) return false;
    return waitpid(pid_, nullptr, WNOHANG) == 0;
  }

 private:
  pid_t pid_ = -1;
  int wfd_ = -1, rfd_ = -1;
  std::string buf_;
};

inline std::string write_temp_mps(const MilpModel& model) {
  static int counter = 0;
  std::string path = strf("/tmp/h2ems_%d_%d.mps", static_cast<int>(getpid()), counter++);
  std::ofstream f(path);
  if (!f) throw SolverError("cannot write " + path);
  f << model.export_mps();
  f.close();
  return path;
}

inline std::string write_temp_warm(const MilpModel& model, const std::vector<double>& warm) {
  if (static_cast<int>(warm.size()) != model.num_vars())
    throw Error(strf("warm start has %zu values for %d variables", warm.size(),
                     model.num_vars()));
  static int counter = 0;
  std::string path = strf("/tmp/h2ems_%d_w%d.json", static_cast<int>(getpid()), counter++);
  std::ofstream f(path);
  if (!f) throw SolverError("cannot write " + path);
  f << nlohmann::json(warm).dump();
  f.close();
  return path;
}

inline Solution parse_solve_reply(const MilpModel& model, const std::string& line,
                                  SolveInfo* info) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw SolverError(std::string("bad solver reply: ") + e.what());
  }
  if (!j.value("ok", false))
    throw SolverError("solver backend error: " + j.value("error", std::string("unknown")));

  Solution sol;
  const std::string status = j.value("status", "");
  if (status == "optimal")
    sol.status = SolveStatus::optimal;
  else if (status == "feasible_gap")
    sol.status = SolveStatus::feasible_gap;
  else if (status == "infeasible")
    sol.status = SolveStatus::infeasible;
  else if (status == "timeout_no_solution")
    sol.status = SolveStatus::timeout_no_solution;
  else if (status == "unbounded")
    throw SolverError("model is unbounded");
  else
    throw SolverError("unknown solver status: " + status);

  if (info) {
    info->num_rows = j.value("num_rows", 0);
    info->num_cols = j.value("num_cols", 0);
    info->solve_time_s = j.value("solve_time", 0.0);
    info->backend = j.value("backend", "");
  }
  if (!sol.feasible()) return sol;

  const auto& vals = j.at("values");
  if (static_cast<int>(vals.size()) != model.num_vars())
    throw SolverError(strf("solver returned %zu values for %d variables",
                           static_cast<size_t>(vals.size()), model.num_vars()));
  sol.values.reserve(vals.size());
  for (const auto& v : vals) sol.values.push_back(v.get<double>());

  // Round near-integral binaries before checking; MILP backends return
  // integer values only up to their own tolerance.
  for (int i = 0; i < model.num_vars(); ++i)
    if (model.kind({i}) == VarKind::binary) {
      double& v = sol.values[static_cast<size_t>(i)];
      if (std::fabs(v - std::round(v)) < 1e-5) v = std::round(v);
    }

  auto viols = model.check_feasibility(sol.values, 1e-6);
  if (!viols.empty())
    throw SolverError(strf("solver solution violates '%s' by %g (%zu violations total)",
                           viols.front().where.c_str(), viols.front().amount, viols.size()));

  sol.objective = model.objective_value(sol.values);
  const double reported = j.value("objective", sol.objective);
  if (std::fabs(reported - sol.objective) > 1e-4 * std::max(1.0, std::fabs(sol.objective)))
    throw SolverError(strf("objective mismatch: backend %.10g vs recomputed %.10g", reported,
                           sol.objective));
  sol.gap = j.value("gap", 0.0);
  return sol;
}

}  // namespace detail

// Persistent helper process; one SOLVE line per model.
class MpsServerSolver : public Solver {
 public:
  explicit MpsServerSolver(std::string script = default_solver_script())
      : script_(std::move(script)) {}

  Solution solve(const MilpModel& model, const SolverConfig& cfg, SolveInfo* info = nullptr,
                 const std::vector<double>* warm = nullptr) override {
    ensure_server();
    const std::string path = detail::write_temp_mps(model);
    std::string warm_path;
    std::string cmd =
        strf("SOLVE %s %.6g %.10g %d", path.c_str(), cfg.time_limit_s, cfg.rel_gap, cfg.seed);
    if (warm && !warm->empty()) {
      warm_path = detail::write_temp_warm(model, *warm);
      cmd += " " + warm_path;
    }
    std::string reply;
    bool ok = child_->write_line(cmd) &&
              child_->read_line(reply, cfg.time_limit_s + grace_s_);
    if (!ok) {
      // one restart attempt; a crashed helper should not kill a long run
      child_.reset();
      ensure_server();
      ok = child_->write_line(cmd) && child_->read_line(reply, cfg.time_limit_s + grace_s_);
    }
    std::remove(path.c_str());
    if (!warm_path.empty()) std::remove(warm_path.c_str());
    if (!ok) throw SolverError("solver server did not reply");
    return detail::parse_solve_reply(model, reply, info);
  }

 private:
  void ensure_server() {
    if (child_ && child_->alive()) return;
    child_ = std::make_unique<detail::ChildProcess>(
        std::vector<std::string>{"python3", script_, "server"});
    std::string hello;
    if (!child_->read_line(hello, 30.0))
      throw SolverUnavailable("solver backend did not start (no handshake)");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(hello);
    } catch (...) {
      throw SolverUnavailable("solver backend handshake is not JSON: " + hello);
    }
    if (!j.value("ready", false))
      throw SolverUnavailable("solver backend unavailable: " +
                              j.value("error", std::string("unknown")));
  }

  std::string script_;
  std::unique_ptr<detail::ChildProcess> child_;
  double grace_s_ = 40.0;  // model build + interpreter overhead headroom
};

// Fresh subprocess per solve; slower but stateless.
class MpsOneShotSolver : public Solver {
 public:
  explicit MpsOneShotSolver(std::string script = default_solver_script())
      : script_(std::move(script)) {}

  Solution solve(const MilpModel& model, const SolverConfig& cfg, SolveInfo* info = nullptr,
                 const std::vector<double>* warm = nullptr) override {
    const std::string path = detail::write_temp_mps(model);
    std::vector<std::string> argv{"python3",
                                  script_,
                                  "solve",
                                  path,
                                  strf("%.6g", cfg.time_limit_s),
                                  strf("%.10g", cfg.rel_gap),
                                  strf("%d", cfg.seed)};
    std::string warm_path;
    if (warm && !warm->empty()) {
      warm_path = detail::write_temp_warm(model, *warm);
      argv.push_back(warm_path);
    }
    detail::ChildProcess child(argv);
    std::string reply;
    const bool ok = child.read_line(reply, cfg.time_limit_s + 60.0);
    std::remove(path.c_str());
    if (!warm_path.empty()) std::remove(warm_path.c_str());
    if (!ok) throw SolverError("one-shot solver produced no reply");
    return detail::parse_solve_reply(model, reply, info);
  }

 private:
  std::string script_;
};

}  // namespace h2ems
