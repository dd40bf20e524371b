// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

// Scratch directory removed at scope exit.
class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("mias-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

#define CHECK_ERROR_CODE(expr, expected)                                      \
    do {                                                                      \
        bool caught_ = false;                                                 \
        try {                                                                 \
            (void)(expr);                                                     \
        } catch (const ::mias::Error& e_) {                                   \
            caught_ = true;                                                   \
            CHECK_MESSAGE(e_.code() == (expected), e_.what());                \
        }                                                                     \
        CHECK_MESSAGE(caught_, "expected an error from " #expr);              \
    } while (false)
