#include "blockforge/sandbox.hpp"

#include <fcntl.h>
#include <linux/landlock.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "blockforge/error.hpp"

extern char** environ;

namespace blockforge {
namespace {

constexpr unsigned char kNetIsolated = 1;
constexpr unsigned char kFsConfined = 2;
constexpr unsigned char kExecFailed = 0x80;

constexpr std::uint64_t kWriteAccess =
    LANDLOCK_ACCESS_FS_WRITE_FILE | LANDLOCK_ACCESS_FS_REMOVE_DIR | LANDLOCK_ACCESS_FS_REMOVE_FILE |
    LANDLOCK_ACCESS_FS_MAKE_CHAR | LANDLOCK_ACCESS_FS_MAKE_DIR | LANDLOCK_ACCESS_FS_MAKE_REG |
    LANDLOCK_ACCESS_FS_MAKE_SOCK | LANDLOCK_ACCESS_FS_MAKE_FIFO | LANDLOCK_ACCESS_FS_MAKE_BLOCK |
    LANDLOCK_ACCESS_FS_MAKE_SYM;

struct Pipe {
  int fd[2] = {-1, -1};
  void open_cloexec() {
    if (pipe2(fd, O_CLOEXEC) != 0) throw Error(ErrorCode::SandboxSetupFailed, std::strerror(errno));
  }
  void close_read() { close_fd(fd[0]); }
  void close_write() { close_fd(fd[1]); }
  ~Pipe() {
    close_read();
    close_write();
  }
  static void close_fd(int& f) {
    if (f >= 0) {
      ::close(f);
      f = -1;
    }
  }
};

void set_limit(int resource, rlim_t value) {
  rlimit rl{value, value};
  setrlimit(resource, &rl);
}

// Only async-signal-safe calls from here on: the parent may be multithreaded.
bool confine_writes(const char* writable_root) {
  landlock_ruleset_attr attr{};
  attr.handled_access_fs = kWriteAccess;
  long ruleset = syscall(SYS_landlock_create_ruleset, &attr, sizeof attr, 0);
  if (ruleset < 0) return false;
  bool ok = true;
  auto allow = [&](const char* path, std::uint64_t access) {
    int fd = ::open(path, O_PATH | O_CLOEXEC);
    if (fd < 0) return;
    landlock_path_beneath_attr rule{access, fd};
    if (syscall(SYS_landlock_add_rule, ruleset, LANDLOCK_RULE_PATH_BENEATH, &rule, 0) != 0) ok = false;
    ::close(fd);
  };
  allow(writable_root, kWriteAccess);
  allow("/dev", LANDLOCK_ACCESS_FS_WRITE_FILE);
  if (ok && prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) == 0 && syscall(SYS_landlock_restrict_self, ruleset, 0) == 0) {
    ::close(static_cast<int>(ruleset));
    return true;
  }
  ::close(static_cast<int>(ruleset));
  return false;
}

void append_capped(std::string& buf, const char* data, std::size_t n, std::size_t cap) {
  buf.append(data, n);
  if (buf.size() > cap) buf.erase(0, buf.size() - cap);  // the tail carries the diagnostics
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options) {
  if (argv.empty()) throw Error(ErrorCode::SandboxSetupFailed, "empty argv");

  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  std::vector<char*> cenv;
  for (const auto& e : options.env) cenv.push_back(const_cast<char*>(e.c_str()));
  cenv.push_back(nullptr);
  char** envp = options.env.empty() ? environ : cenv.data();
  std::string cwd = options.cwd.string();
  std::string writable = options.writable_root.empty() ? cwd : options.writable_root.string();
  const SandboxLimits& lim = options.limits;
  auto timeout = options.timeout;
  if (options.sandboxed && timeout.count() == 0) timeout = lim.wall_clock;
  std::size_t cap = options.sandboxed ? lim.output_cap_bytes : (std::size_t{64} << 20);

  Pipe out, err, in, status;
  out.open_cloexec();
  err.open_cloexec();
  in.open_cloexec();
  status.open_cloexec();

  const bool own_group = options.sandboxed || timeout.count() > 0;
  auto start = std::chrono::steady_clock::now();
  pid_t pid = fork();
  if (pid < 0) throw Error(ErrorCode::SandboxSetupFailed, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    dup2(in.fd[0], STDIN_FILENO);
    dup2(out.fd[1], STDOUT_FILENO);
    dup2(err.fd[1], STDERR_FILENO);
    unsigned char flags = 0;
    if (own_group) setpgid(0, 0);
    if (options.sandboxed) {
      set_limit(RLIMIT_AS, static_cast<rlim_t>(lim.memory_bytes));
      set_limit(RLIMIT_CPU, static_cast<rlim_t>(lim.wall_clock.count() / 1000 + 2));
      set_limit(RLIMIT_CORE, 0);
      set_limit(RLIMIT_FSIZE, static_cast<rlim_t>(256) << 20);
      if (!lim.allow_network && unshare(CLONE_NEWUSER | CLONE_NEWNET) == 0) flags |= kNetIsolated;
      if (!writable.empty() && confine_writes(writable.c_str())) flags |= kFsConfined;
    }
    if (!cwd.empty() && chdir(cwd.c_str()) != 0) {
      int e = errno;
      unsigned char msg[1 + sizeof(int)] = {kExecFailed};
      std::memcpy(msg + 1, &e, sizeof e);
      [[maybe_unused]] auto w = write(status.fd[1], msg, sizeof msg);
      _exit(127);
    }
    [[maybe_unused]] auto w0 = write(status.fd[1], &flags, 1);
    execvpe(cargv[0], cargv.data(), envp);
    int e = errno;
    unsigned char msg[1 + sizeof(int)] = {kExecFailed};
    std::memcpy(msg + 1, &e, sizeof e);
    [[maybe_unused]] auto w1 = write(status.fd[1], msg, sizeof msg);
    _exit(127);
  }
  if (own_group) setpgid(pid, pid);  // mirrors the child's call; either may win the race
  out.close_write();
  err.close_write();
  in.close_read();
  status.close_write();

  ProcessResult result;
  std::array<unsigned char, 16> sbuf{};
  std::size_t got = 0;
  while (true) {
    ssize_t n = read(status.fd[0], sbuf.data() + got, sbuf.size() - got);
    if (n > 0) {
      got += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    break;
  }
  int exec_errno = 0;
  for (std::size_t i = 0; i < got; ++i) {
    if (sbuf[i] & kExecFailed) {
      if (i + 1 + sizeof(int) <= got) std::memcpy(&exec_errno, sbuf.data() + i + 1, sizeof(int));
      break;
    }
    result.network_isolated = (sbuf[i] & kNetIsolated) != 0;
    result.filesystem_confined = (sbuf[i] & kFsConfined) != 0;
  }
  if (exec_errno != 0) {
    int st = 0;
    waitpid(pid, &st, 0);
    if (exec_errno == ENOENT) throw Error(ErrorCode::InterpreterMissing, "cannot execute '" + argv[0] + "'");
    throw Error(ErrorCode::SandboxSetupFailed, "exec " + argv[0] + ": " + std::strerror(exec_errno));
  }

  std::string_view pending_in = options.stdin_data ? std::string_view(*options.stdin_data) : std::string_view();
  if (pending_in.empty()) in.close_write();
  fcntl(in.fd[1], F_SETFL, O_NONBLOCK);

  bool killed = false;
  std::chrono::steady_clock::time_point killed_at;
  std::array<char, 8192> buf{};
  while (out.fd[0] >= 0 || err.fd[0] >= 0) {
    // Descendants that left the group may hold the pipes open.
    if (killed && std::chrono::steady_clock::now() - killed_at > std::chrono::seconds(1)) {
      out.close_read();
      err.close_read();
      break;
    }
    std::array<pollfd, 3> fds{};
    nfds_t nf = 0;
    int out_i = -1, err_i = -1, in_i = -1;
    if (out.fd[0] >= 0) { fds[nf] = {out.fd[0], POLLIN, 0}; out_i = static_cast<int>(nf++); }
    if (err.fd[0] >= 0) { fds[nf] = {err.fd[0], POLLIN, 0}; err_i = static_cast<int>(nf++); }
    if (in.fd[1] >= 0) { fds[nf] = {in.fd[1], POLLOUT, 0}; in_i = static_cast<int>(nf++); }
    int wait_ms = 200;
    if (timeout.count() > 0 && !killed) {
      auto left = timeout - std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
      if (left.count() <= 0) {
        kill(-pid, SIGKILL);
        kill(pid, SIGKILL);
        killed = true;
        killed_at = std::chrono::steady_clock::now();
        result.timed_out = true;
      } else {
        wait_ms = static_cast<int>(std::min<long long>(left.count(), 200));
      }
    }
    int pr = poll(fds.data(), nf, wait_ms);
    if (pr < 0) {
      if (errno == EINTR) continue;
      break;
    }
    auto drain = [&](int idx, Pipe& p, std::string& sink) {
      if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) return;
      ssize_t n = read(p.fd[0], buf.data(), buf.size());
      if (n > 0) {
        append_capped(sink, buf.data(), static_cast<std::size_t>(n), cap);
      } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
        p.close_read();
      }
    };
    drain(out_i, out, result.out);
    drain(err_i, err, result.err);
    if (in_i >= 0 && (fds[in_i].revents & (POLLOUT | POLLERR | POLLHUP))) {
      ssize_t n = write(in.fd[1], pending_in.data(), pending_in.size());
      if (n > 0) pending_in.remove_prefix(static_cast<std::size_t>(n));
      if (n < 0 && errno != EAGAIN) pending_in = {};
      if (pending_in.empty()) in.close_write();
    }
  }
  in.close_write();

  int st = 0;
  while (waitpid(pid, &st, 0) < 0 && errno == EINTR) {
  }
  if (own_group) kill(-pid, SIGKILL);  // stragglers left in the group
  result.wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  if (WIFEXITED(st)) {
    result.exit_code = WEXITSTATUS(st);
  } else if (WIFSIGNALED(st)) {
    result.term_signal = WTERMSIG(st);
    // CPU rlimit exhaustion is a timeout as well.
    if (result.term_signal == SIGXCPU) result.timed_out = true;
  }
  return result;
}

ScratchDir::ScratchDir(const std::string& prefix) {
  std::string tmpl = (std::filesystem::temp_directory_path() / (prefix + "-XXXXXX")).string();
  if (mkdtemp(tmpl.data()) == nullptr) throw Error(ErrorCode::SandboxSetupFailed, "mkdtemp failed");
  path_ = tmpl;
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<std::string> minimal_environment(const std::filesystem::path& scratch) {
  std::vector<std::string> env;
  const char* path = std::getenv("PATH");
  env.push_back(std::string("PATH=") + (path ? path : "/usr/local/bin:/usr/bin:/bin"));
  env.push_back("HOME=" + scratch.string());
  env.push_back("TMPDIR=" + scratch.string());
  env.push_back("PYTHONDONTWRITEBYTECODE=1");
  env.push_back("LANG=C.UTF-8");
  return env;
}

}  // namespace blockforge
