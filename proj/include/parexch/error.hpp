// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace parexch {

enum class Errc {
  kLengthMismatch,
  kNonFinite,
  kOverflowToInfinity,
  kInvalidRank,
  kPeerUnreachable,
  kPeerClosed,
  kTimeout,
  kProtocolViolation,
  kCorruptHeader,
  kTruncatedPayload,
  kCropLargerThanImage,
  kShapeMismatch,
  kNonFiniteLoss,
  kNonFiniteGradient,
  kWorkerPanic,
  kConfig,
  kIo,
};

const char* errc_name(Errc code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Raised by spawn_world when a rank context fails; carries the failing rank.
class WorkerPanic : public Error {
 public:
  WorkerPanic(int rank, const std::string& what)
      : Error(Errc::kWorkerPanic, "rank " + std::to_string(rank) + ": " + what), rank_(rank) {}

  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

}  // namespace parexch
