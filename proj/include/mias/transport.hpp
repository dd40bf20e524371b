// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <sys/types.h>

namespace mias {

// A reliable byte stream to a decoder. Reads wait at most `timeout_ms`
// (negative = forever) for the whole buffer.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
    virtual void read_exact(std::span<std::uint8_t> out, int timeout_ms) = 0;
    // Extra context for failures (e.g. child exit status).
    virtual std::string describe() const { return {}; }
};

// Pair of file descriptors. Owned descriptors are closed on destruction.
class FdTransport : public Transport {
  public:
    FdTransport(int read_fd, int write_fd, bool owned);
    ~FdTransport() override;
    FdTransport(const FdTransport&) = delete;
    FdTransport& operator=(const FdTransport&) = delete;

    void write_all(std::span<const std::uint8_t> bytes) override;
    void read_exact(std::span<std::uint8_t> out, int timeout_ms) override;

  protected:
    void close_fds();

    int read_fd_;
    int write_fd_;
    bool owned_;
};

// Runs `command` through /bin/sh and talks to it over its stdin/stdout.
// stderr is inherited. The child gets EOF on stdin at destruction and is
// killed if it does not exit promptly.
class SubprocessTransport final : public FdTransport {
  public:
    explicit SubprocessTransport(const std::string& command);
    ~SubprocessTransport() override;

    void read_exact(std::span<std::uint8_t> out, int timeout_ms) override;
    std::string describe() const override;
    pid_t pid() const { return pid_; }

  private:
    std::string command_;
    pid_t pid_ = -1;
};

// Client end of a unix-domain stream socket.
class UnixSocketTransport final : public FdTransport {
  public:
    explicit UnixSocketTransport(const std::filesystem::path& path);
    std::string describe() const override { return "socket " + path_; }

  private:
    std::string path_;
};

// Listening unix-domain socket; accept() returns a connected transport.
class UnixSocketListener {
  public:
    explicit UnixSocketListener(const std::filesystem::path& path);
    ~UnixSocketListener();
    UnixSocketListener(const UnixSocketListener&) = delete;
    UnixSocketListener& operator=(const UnixSocketListener&) = delete;

    FdTransport accept(int timeout_ms = -1);

  private:
    std::filesystem::path path_;
    int fd_ = -1;
};

} // namespace mias
