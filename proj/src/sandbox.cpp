#include <fcntl.h>
#include <linux/audit.h>
#include <linux/filter.h>
#include <linux/seccomp.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/socket.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstddef>
#include <cstring>
#include <thread>

#include "iterresearch/tools.hpp"

namespace iterresearch {

namespace {

#if defined(__x86_64__)
constexpr std::uint32_t kAuditArch = AUDIT_ARCH_X86_64;
#elif defined(__aarch64__)
constexpr std::uint32_t kAuditArch = AUDIT_ARCH_AARCH64;
#else
#error "sandbox seccomp filter: unsupported architecture"
#endif

constexpr std::size_t kCaptureCap = 1u << 20;

// Denies socket() for every family except AF_UNIX, and io_uring_setup, with EACCES.
int install_network_filter() {
  struct sock_filter filter[] = {
      BPF_STMT(BPF_LD | BPF_W | BPF_ABS, offsetof(struct seccomp_data, arch)),
      BPF_JUMP(BPF_JMP | BPF_JEQ | BPF_K, kAuditArch, 1, 0),
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_KILL_PROCESS),
      BPF_STMT(BPF_LD | BPF_W | BPF_ABS, offsetof(struct seccomp_data, nr)),
      BPF_JUMP(BPF_JMP | BPF_JGE | BPF_K, 0x40000000u, 0, 1),  // x32 ABI
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_KILL_PROCESS),
      BPF_JUMP(BPF_JMP | BPF_JEQ | BPF_K, __NR_io_uring_setup, 3, 0),
      BPF_JUMP(BPF_JMP | BPF_JEQ | BPF_K, __NR_socket, 0, 3),
      BPF_STMT(BPF_LD | BPF_W | BPF_ABS, offsetof(struct seccomp_data, args[0])),
      BPF_JUMP(BPF_JMP | BPF_JEQ | BPF_K, AF_UNIX, 1, 0),
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_ERRNO | (EACCES & SECCOMP_RET_DATA)),
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_ALLOW),
  };
  struct sock_fprog prog = {static_cast<unsigned short>(sizeof(filter) / sizeof(filter[0])), filter};
  if (prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0) return -1;
  return prctl(PR_SET_SECCOMP, SECCOMP_MODE_FILTER, &prog);
}

struct Pipe {
  int fds[2] = {-1, -1};

  bool open(int flags) { return pipe2(fds, flags) == 0; }
  void close_read() { close_fd(fds[0]); }
  void close_write() { close_fd(fds[1]); }
  ~Pipe() {
    close_fd(fds[0]);
    close_fd(fds[1]);
  }

  static void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
};

// Child-side failure report: stage byte + errno, written to the CLOEXEC status pipe.
[[noreturn]] void child_fail(int status_fd, char stage) {
  int err = errno;
  char buf[1 + sizeof err];
  buf[0] = stage;
  std::memcpy(buf + 1, &err, sizeof err);
  [[maybe_unused]] auto n = ::write(status_fd, buf, sizeof buf);
  _exit(127);
}

}  // namespace

CodeRunResult run_code(const std::string& source, const SandboxLimits& limits,
                       const std::vector<std::string>& interpreter) {
  if (trim(source).empty()) throw Error(Errc::invalid_argument, "source is empty");
  if (interpreter.empty()) throw Error(Errc::sandbox_unavailable, "no interpreter command configured");

  std::vector<char*> argv;
  for (const auto& a : interpreter) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  Pipe in, out, err, status;
  if (!in.open(O_CLOEXEC) || !out.open(O_CLOEXEC) || !err.open(O_CLOEXEC) || !status.open(O_CLOEXEC)) {
    throw Error(Errc::sandbox_unavailable, std::string("pipe: ") + std::strerror(errno));
  }

  const auto wall_secs = static_cast<rlim_t>(limits.wall_time.count() / 1000 + 2);
  const pid_t pid = fork();
  if (pid < 0) throw Error(Errc::sandbox_unavailable, std::string("fork: ") + std::strerror(errno));

  if (pid == 0) {
    setpgid(0, 0);
    if (dup2(in.fds[0], STDIN_FILENO) < 0 || dup2(out.fds[1], STDOUT_FILENO) < 0 ||
        dup2(err.fds[1], STDERR_FILENO) < 0) {
      child_fail(status.fds[1], 'd');
    }
    if (limits.no_network) {
      // A private network namespace is best effort; the seccomp filter is mandatory.
      if (unshare(CLONE_NEWNET) != 0) (void)unshare(CLONE_NEWUSER | CLONE_NEWNET);
      if (install_network_filter() != 0) child_fail(status.fds[1], 's');
    }
    struct rlimit mem = {limits.memory_bytes, limits.memory_bytes};
    struct rlimit cpu = {wall_secs, wall_secs};
    struct rlimit core = {0, 0};
    if (setrlimit(RLIMIT_AS, &mem) != 0 || setrlimit(RLIMIT_CPU, &cpu) != 0 || setrlimit(RLIMIT_CORE, &core) != 0) {
      child_fail(status.fds[1], 'r');
    }
    execvp(argv[0], argv.data());
    child_fail(status.fds[1], 'e');
  }

  setpgid(pid, pid);
  in.close_read();
  out.close_write();
  err.close_write();
  status.close_write();

  // Exec succeeded iff the status pipe closes without data.
  char report[1 + sizeof(int)];
  ssize_t got;
  do {
    got = ::read(status.fds[0], report, sizeof report);
  } while (got < 0 && errno == EINTR);
  if (got > 0) {
    int child_errno = 0;
    if (got == static_cast<ssize_t>(sizeof report)) std::memcpy(&child_errno, report + 1, sizeof child_errno);
    waitpid(pid, nullptr, 0);
    const char* stage = report[0] == 'e' ? "exec" : report[0] == 's' ? "seccomp" : report[0] == 'r' ? "rlimit" : "setup";
    throw Error(Errc::sandbox_unavailable,
                std::string(stage) + " failed for '" + interpreter.front() + "': " + std::strerror(child_errno));
  }

  fcntl(in.fds[1], F_SETFL, O_NONBLOCK);
  CodeRunResult result;
  std::size_t written = 0;
  bool out_open = true, err_open = true;
  const auto deadline = std::chrono::steady_clock::now() + limits.wall_time;

  auto drain = [](int fd, std::string& sink, bool& open_flag) {
    char buf[8192];
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n > 0) {
      if (sink.size() < kCaptureCap) sink.append(buf, std::min<std::size_t>(static_cast<std::size_t>(n), kCaptureCap - sink.size()));
    } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
      open_flag = false;
    }
  };

  while (out_open || err_open) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      result.timed_out = true;
      break;
    }
    struct pollfd fds[3];
    nfds_t nfds = 0;
    int out_idx = -1, err_idx = -1, in_idx = -1;
    if (out_open) { fds[nfds] = {out.fds[0], POLLIN, 0}; out_idx = static_cast<int>(nfds++); }
    if (err_open) { fds[nfds] = {err.fds[0], POLLIN, 0}; err_idx = static_cast<int>(nfds++); }
    if (in.fds[1] >= 0) { fds[nfds] = {in.fds[1], POLLOUT, 0}; in_idx = static_cast<int>(nfds++); }
    const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    const int rc = poll(fds, nfds, static_cast<int>(std::min<long long>(wait_ms, 1000)));
    if (rc < 0 && errno != EINTR) break;
    if (rc <= 0) continue;
    if (in_idx >= 0 && fds[in_idx].revents) {
      if (fds[in_idx].revents & (POLLERR | POLLHUP)) {
        in.close_write();
      } else {
        const ssize_t n = ::write(in.fds[1], source.data() + written, source.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (written == source.size() || (n < 0 && errno != EAGAIN && errno != EINTR)) in.close_write();
      }
    }
    if (out_idx >= 0 && fds[out_idx].revents) drain(out.fds[0], result.stdout_text, out_open);
    if (err_idx >= 0 && fds[err_idx].revents) drain(err.fds[0], result.stderr_text, err_open);
  }
  in.close_write();

  int wstatus = 0;
  if (!result.timed_out) {
    // Output closed; the process may still be running with its streams shut.
    while (true) {
      const pid_t w = waitpid(pid, &wstatus, WNOHANG);
      if (w == pid) break;
      if (std::chrono::steady_clock::now() >= deadline) {
        result.timed_out = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  if (result.timed_out) {
    kill(-pid, SIGKILL);
    kill(pid, SIGKILL);
    waitpid(pid, &wstatus, 0);
  }

  if (WIFEXITED(wstatus)) {
    result.exit_status = WEXITSTATUS(wstatus);
  } else if (WIFSIGNALED(wstatus)) {
    result.exit_status = 128 + WTERMSIG(wstatus);
  }
  if (result.timed_out && result.exit_status == 0) result.exit_status = 128 + SIGKILL;
  return result;
}

}  // namespace iterresearch
