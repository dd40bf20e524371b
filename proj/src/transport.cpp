// SPDX-License-Identifier: Apache-2.0
#include "mias/transport.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <mutex>
#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "mias/error.hpp"

extern char** environ;

namespace mias {

namespace {

// A dead peer must surface as an error, not kill the process.
void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

std::string errno_text(const char* what) {
    return std::string(what) + ": " + std::strerror(errno);
}

sockaddr_un socket_address(const std::filesystem::path& path) {
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    const std::string s = path.string();
    MIAS_THROW_IF_NOT(s.size() < sizeof(addr.sun_path), ErrorCode::InvalidArgument, "socket path too long: " + s);
    std::memcpy(addr.sun_path, s.c_str(), s.size() + 1);
    return addr;
}

} // namespace

FdTransport::FdTransport(int read_fd, int write_fd, bool owned)
    : read_fd_(read_fd), write_fd_(write_fd), owned_(owned) {
    ignore_sigpipe();
}

FdTransport::~FdTransport() { close_fds(); }

void FdTransport::close_fds() {
    if (!owned_) {
        return;
    }
    if (write_fd_ >= 0 && write_fd_ != read_fd_) {
        ::close(write_fd_);
    }
    if (read_fd_ >= 0) {
        ::close(read_fd_);
    }
    read_fd_ = write_fd_ = -1;
}

void FdTransport::write_all(std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        const ssize_t n = ::write(write_fd_, bytes.data() + done, bytes.size() - done);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw Error(ErrorCode::DecoderFailure, errno_text("write to decoder failed") + describe());
        }
        done += static_cast<std::size_t>(n);
    }
}

void FdTransport::read_exact(std::span<std::uint8_t> out, int timeout_ms) {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + std::chrono::milliseconds(timeout_ms < 0 ? 0 : timeout_ms);
    std::size_t done = 0;
    while (done < out.size()) {
        int wait = -1;
        if (timeout_ms >= 0) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
            MIAS_THROW_IF_NOT(left > 0, ErrorCode::Timeout,
                              "decoder did not answer within " + std::to_string(timeout_ms) + " ms");
            wait = static_cast<int>(left);
        }
        pollfd pfd{read_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, wait);
        if (ready < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw Error(ErrorCode::DecoderFailure, errno_text("poll failed"));
        }
        if (ready == 0) {
            continue; // deadline re-checked above
        }
        const ssize_t n = ::read(read_fd_, out.data() + done, out.size() - done);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) {
                continue;
            }
            throw Error(ErrorCode::DecoderFailure, errno_text("read from decoder failed"));
        }
        MIAS_THROW_IF_NOT(n > 0, ErrorCode::DecoderFailure,
                          "decoder closed the stream after " + std::to_string(done) + " of " +
                              std::to_string(out.size()) + " bytes");
        done += static_cast<std::size_t>(n);
    }
}

SubprocessTransport::SubprocessTransport(const std::string& command)
    : FdTransport(-1, -1, true), command_(command) {
    MIAS_THROW_IF_NOT(!command.empty(), ErrorCode::Config, "empty decoder command");
    int to_child[2];
    int from_child[2];
    MIAS_THROW_IF_NOT(::pipe2(to_child, O_CLOEXEC) == 0, ErrorCode::DecoderFailure, errno_text("pipe"));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw Error(ErrorCode::DecoderFailure, errno_text("pipe"));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
    const char* argv[] = {"sh", "-c", command.c_str(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
        ::close(to_child[1]);
        ::close(from_child[0]);
        throw Error(ErrorCode::DecoderFailure, "cannot start decoder '" + command + "': " + std::strerror(rc));
    }
    read_fd_ = from_child[0];
    write_fd_ = to_child[1];
}

SubprocessTransport::~SubprocessTransport() {
    close_fds();
    if (pid_ <= 0) {
        return;
    }
    int status = 0;
    for (int i = 0; i < 200; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) != 0) {
            return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
}

void SubprocessTransport::read_exact(std::span<std::uint8_t> out, int timeout_ms) {
    try {
        FdTransport::read_exact(out, timeout_ms);
    } catch (const Error& e) {
        throw Error(e.code(), std::string(e.what()) + describe());
    }
}

std::string SubprocessTransport::describe() const {
    std::string text = " [decoder command: " + command_;
    int status = 0;
    // Peek without reaping so the destructor still owns the child.
    siginfo_t info{};
    if (pid_ > 0 && ::waitid(P_PID, static_cast<id_t>(pid_), &info, WEXITED | WNOHANG | WNOWAIT) == 0 &&
        info.si_pid == pid_) {
        status = info.si_status;
        text += info.si_code == CLD_EXITED ? "; exited with status " + std::to_string(status)
                                           : "; killed by signal " + std::to_string(status);
    }
    return text + "]";
}

UnixSocketTransport::UnixSocketTransport(const std::filesystem::path& path)
    : FdTransport(-1, -1, true), path_(path.string()) {
    const int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    MIAS_THROW_IF_NOT(fd >= 0, ErrorCode::DecoderFailure, errno_text("socket"));
    const sockaddr_un addr = socket_address(path);
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string msg = errno_text(("cannot connect to decoder socket " + path_).c_str());
        ::close(fd);
        throw Error(ErrorCode::DecoderFailure, msg);
    }
    read_fd_ = write_fd_ = fd;
}

UnixSocketListener::UnixSocketListener(const std::filesystem::path& path) : path_(path) {
    fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    MIAS_THROW_IF_NOT(fd_ >= 0, ErrorCode::Io, errno_text("socket"));
    std::error_code ec;
    std::filesystem::remove(path, ec);
    const sockaddr_un addr = socket_address(path);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 8) != 0) {
        const std::string msg = errno_text(("cannot listen on " + path.string()).c_str());
        ::close(fd_);
        throw Error(ErrorCode::Io, msg);
    }
}

UnixSocketListener::~UnixSocketListener() {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
}

FdTransport UnixSocketListener::accept(int timeout_ms) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms);
    MIAS_THROW_IF_NOT(ready > 0, ErrorCode::Timeout, "no decoder client connected");
    const int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    MIAS_THROW_IF_NOT(c >= 0, ErrorCode::Io, errno_text("accept"));
    return FdTransport(c, c, true);
}

} // namespace mias
