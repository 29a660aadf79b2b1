#include "spotdiff/external_denoiser.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace spotdiff {

namespace {

struct TransportFailure {
  std::string message;
  bool timeout = false;
};

[[noreturn]] void fail(std::string message, bool timeout = false) {
  throw TransportFailure{std::move(message), timeout};
}

int wait_ready(int fd, short events, std::chrono::milliseconds timeout) {
  pollfd p{fd, events, 0};
  for (;;) {
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc < 0 && errno == EINTR) continue;
    return rc < 0 ? -1 : (rc == 0 ? 0 : p.revents);
  }
}

}  // namespace

struct ExternalDenoiser::Process {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  bool reaped = false;
  int status = 0;

  ~Process() {
    if (to_child >= 0) ::close(to_child);
    if (from_child >= 0) ::close(from_child);
    if (pid > 0 && !reaped) {
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
    }
  }
};

ExternalDenoiser::ExternalDenoiser(Options options) : options_(std::move(options)) {
  // A dead child must surface as EPIPE, not kill the engine.
  std::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw ProtocolError("pipe failed: " + std::string(std::strerror(errno)));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ProtocolError("pipe failed: " + std::string(std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw ProtocolError("fork failed: " + std::string(std::strerror(errno)));
  if (pid == 0) {
    // Own process group, so a kill also reaches whatever the shell spawned.
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", options_.command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  process_ = std::make_unique<Process>();
  process_->pid = pid;
  process_->to_child = in_pipe[1];
  process_->from_child = out_pipe[0];

  try {
    send(protocol::encode_hello(options_.hello));
  } catch (const TransportFailure& f) {
    throw ProtocolError("HELLO to '" + options_.command + "' failed: " + f.message);
  }
}

ExternalDenoiser::~ExternalDenoiser() {
  try {
    shutdown();
  } catch (...) {
  }
}

void ExternalDenoiser::send(std::span<const std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const int ready = wait_ready(process_->to_child, POLLOUT, options_.timeout);
    if (ready == 0) fail("timed out writing to denoiser process", true);
    if (ready < 0 || (ready & (POLLERR | POLLNVAL))) fail("denoiser process input closed");
    const ssize_t n = ::write(process_->to_child, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail("write to denoiser process failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
}

void ExternalDenoiser::receive(std::uint8_t* dst, std::size_t n) {
  std::size_t done = 0;
  while (done < n) {
    const int ready = wait_ready(process_->from_child, POLLIN, options_.timeout);
    if (ready == 0) fail("timed out waiting for denoiser response", true);
    if (ready < 0) fail("poll on denoiser output failed");
    const ssize_t got = ::read(process_->from_child, dst + done, n - done);
    if (got < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail("read from denoiser process failed: " + std::string(std::strerror(errno)));
    }
    if (got == 0) fail("denoiser process closed its output");
    done += static_cast<std::size_t>(got);
  }
}

protocol::Response ExternalDenoiser::exchange(const protocol::Request& request) {
  std::lock_guard lock(mutex_);
  const std::string where = "t = " + std::to_string(request.timestep) + ", window " +
                            std::to_string(request.window_index);
  if (!process_ || process_->reaped) throw ProtocolError(where + ": denoiser already shut down");
  if (request.payload.size() != options_.hello.payload_count()) {
    throw ShapeMismatch(where + ": request payload does not match negotiated dims");
  }
  auto read = [this](std::uint8_t* dst, std::size_t n) { receive(dst, n); };
  try {
    send(protocol::encode_request(request));
    std::uint8_t tag = 0;
    read(&tag, 1);
    if (tag != static_cast<std::uint8_t>(protocol::Tag::response)) {
      throw ProtocolError(where + ": expected a response frame, got tag " + std::to_string(tag));
    }
    auto response = protocol::read_response_body(read, options_.hello);
    ++requests_;
    return response;
  } catch (const ShapeMismatch& e) {
    const std::string what = e.what();
    throw ShapeMismatch(where + ": " + what.substr(what.find(": ") + 2));
  } catch (const TransportFailure& f) {
    if (f.timeout) throw ProtocolTimeout(where + ": " + f.message);
    throw ProtocolError(where + ": " + f.message);
  }
}

WindowLatent ExternalDenoiser::predict_eps(const WindowLatent& window, const WindowContext& ctx) {
  protocol::Request request;
  request.timestep = static_cast<std::uint32_t>(ctx.timestep);
  request.window_index = static_cast<std::uint32_t>(ctx.window_index);
  request.condition = ctx.condition.value;
  if (static_cast<std::uint32_t>(window.width()) != options_.hello.width ||
      static_cast<std::uint32_t>(window.height()) != options_.hello.height ||
      static_cast<std::uint32_t>(window.channels()) != options_.hello.channels) {
    throw ShapeMismatch("window " + window.shape_string() + " does not match negotiated dims");
  }
  request.payload.resize(static_cast<std::size_t>(window.size()));
  for (Eigen::Index i = 0; i < window.size(); ++i) {
    request.payload[i] = static_cast<float>(window.values()[i]);
  }
  const auto response = exchange(request);
  WindowLatent eps(window.width(), window.height(), window.channels());
  eps.timestep_tag = window.timestep_tag;
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.values()[i] = response.payload[i];
  return eps;
}

std::string ExternalDenoiser::descriptor() const {
  return "external(" + options_.command + ")";
}

int ExternalDenoiser::shutdown() {
  std::lock_guard lock(mutex_);
  if (!process_) return -1;
  if (process_->reaped) return process_->status;
  try {
    send(protocol::encode_shutdown());
  } catch (const TransportFailure&) {
    // Child already gone; reap below.
  }
  ::close(process_->to_child);
  process_->to_child = -1;
  int status = 0;
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  for (;;) {
    const pid_t rc = ::waitpid(process_->pid, &status, WNOHANG);
    if (rc == process_->pid || (rc < 0 && errno != EINTR)) break;
    if (std::chrono::steady_clock::now() > deadline) {
      ::kill(-process_->pid, SIGKILL);
      ::waitpid(process_->pid, &status, 0);
      break;
    }
    ::usleep(2000);
  }
  process_->reaped = true;
  process_->status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return process_->status;
}

}  // namespace spotdiff
