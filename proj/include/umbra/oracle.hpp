#pragma once

// Classifier backed by a child process speaking line-delimited JSON:
//
//   child  -> {"classes": C}                               once, on start
//   parent -> {"id": n, "png_b64": "<base64 PNG>"}         per query
//   child  -> {"id": n, "confidences": [c_0, ..., c_{C-1}]}
//
// Requests are serialized over the single pipe pair. A missing handshake,
// id mismatch, wrong vector length, non-normalized vector, malformed JSON
// or a reply slower than the timeout is a ProtocolError.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <string>

#include "umbra/classifier.hpp"
#include "umbra/error.hpp"
#include "umbra/image_io.hpp"

namespace umbra {

class ExternalOracle final : public Classifier {
 public:
  // `command` runs under /bin/sh -c.
  explicit ExternalOracle(const std::string& command,
                          std::chrono::milliseconds timeout = std::chrono::seconds(10))
      : timeout_(timeout) {
    // A dead child must surface as EPIPE on write, not terminate the process.
    static const bool sigpipe_ignored = [] { return signal(SIGPIPE, SIG_IGN) != SIG_ERR; }();
    (void)sigpipe_ignored;
    spawn(command);
    try {
      const auto hello = parse(read_line());
      if (!hello.is_object() || !hello.contains("classes") || !hello["classes"].is_number_integer())
        throw ProtocolError("oracle handshake must be {\"classes\": C}");
      const auto c = hello["classes"].get<long long>();
      if (c < 2 || c > 100000) throw ProtocolError("oracle reported an invalid class count");
      classes_ = static_cast<std::size_t>(c);
    } catch (...) {
      shutdown();
      throw;
    }
  }

  ExternalOracle(const ExternalOracle&) = delete;
  ExternalOracle& operator=(const ExternalOracle&) = delete;

  ~ExternalOracle() override { shutdown(); }

  std::size_t num_classes() const override { return classes_; }

 protected:
  ConfidenceVector query(const Image& x) override {
    std::lock_guard lock(mutex_);
    if (broken_) throw ProtocolError("oracle connection is closed after an earlier failure");
    try {
      const std::uint64_t id = next_id_++;
      nlohmann::json req = {{"id", id}, {"png_b64", base64_encode(encode_png(x))}};
      write_line(req.dump());
      const auto resp = parse(read_line());
      if (!resp.is_object() || !resp.contains("id") || !resp.contains("confidences"))
        throw ProtocolError("oracle response lacks id or confidences");
      if (!resp["id"].is_number_unsigned() && !resp["id"].is_number_integer())
        throw ProtocolError("oracle response id is not an integer");
      if (resp["id"].get<long long>() != static_cast<long long>(id))
        throw ProtocolError("oracle response id mismatch");
      const auto& arr = resp["confidences"];
      if (!arr.is_array()) throw ProtocolError("confidences must be an array");
      ConfidenceVector out;
      out.reserve(arr.size());
      for (const auto& v : arr) {
        if (!v.is_number()) throw ProtocolError("confidences must be numbers");
        out.push_back(v.get<double>());
      }
      if (out.size() != classes_) throw ProtocolError("oracle returned wrong vector length");
      if (!is_valid_confidence(out, classes_))
        throw ProtocolError("oracle returned a vector that is not a probability distribution");
      return out;
    } catch (...) {
      broken_ = true;
      throw;
    }
  }

 private:
  static nlohmann::json parse(const std::string& line) {
    try {
      return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed oracle JSON: ") + e.what());
    }
  }

  void spawn(const std::string& command) {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) throw QueryError("pipe failed");
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw QueryError("pipe failed");
    }
    pid_ = fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
      throw QueryError("fork failed");
    }
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
    fcntl(read_fd_, F_SETFD, FD_CLOEXEC);
  }

  void write_line(const std::string& line) {
    std::string buf = line + "\n";
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      const ssize_t n = ::write(write_fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError("oracle closed its input");
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      const auto nl = pending_.find('\n');
      if (nl != std::string::npos) {
        std::string line = pending_.substr(0, nl);
        pending_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw ProtocolError("oracle timed out");
      pollfd pfd{read_fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError("poll on oracle pipe failed");
      }
      if (r == 0) throw ProtocolError("oracle timed out");
      char chunk[4096];
      const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError("read from oracle failed");
      }
      if (n == 0) throw ProtocolError("oracle exited");
      pending_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void shutdown() noexcept {
    if (write_fd_ >= 0) close(write_fd_);
    if (read_fd_ >= 0) close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (pid_ > 0) {
      // Give a well-behaved child a moment to exit on EOF before killing it.
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (waitpid(pid_, &status, WNOHANG) == pid_) {
          pid_ = -1;
          return;
        }
        usleep(2000);
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  pid_t pid_{-1};
  int write_fd_{-1};
  int read_fd_{-1};
  std::string pending_;
  std::size_t classes_{0};
  std::uint64_t next_id_{0};
  bool broken_{false};
};

}  // namespace umbra
