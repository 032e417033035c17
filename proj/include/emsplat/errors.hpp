// Copyright Contributors to the emsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emsplat {

/// Coarse error category. The CLI maps these onto process exit codes
/// (usage = 1, data = 2, numerical = 3).
enum class ErrorKind { Usage, Data, Numerical };

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), mKind(kind) {}
    ErrorKind kind() const noexcept { return mKind; }

  private:
    ErrorKind mKind;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string &what) : Error(ErrorKind::Usage, what) {}
};

struct DegenerateRotation : Error {
    explicit DegenerateRotation(const std::string &what) : Error(ErrorKind::Numerical, what) {}
};

struct DegenerateSplat : Error {
    explicit DegenerateSplat(const std::string &what) : Error(ErrorKind::Numerical, what) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string &what) : Error(ErrorKind::Data, what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string &what) : Error(ErrorKind::Data, what) {}
};

/// Raised when the training loss becomes non-finite or blows past the guard.
class DivergenceError : public Error {
  public:
    DivergenceError(const std::string &what, std::size_t record, int epoch = -1, long step = -1)
        : Error(ErrorKind::Numerical, what), mRecord(record), mEpoch(epoch), mStep(step) {}

    std::size_t record() const noexcept { return mRecord; }
    int epoch() const noexcept { return mEpoch; }
    long step() const noexcept { return mStep; }

  private:
    std::size_t mRecord;
    int mEpoch;
    long mStep;
};

} // namespace emsplat
