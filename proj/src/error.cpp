// Copyright 2026 The parexch Authors.
// SPDX-License-Identifier: Apache-2.0

#include "parexch/error.hpp"

namespace parexch {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kNonFinite: return "NonFinite";
    case Errc::kOverflowToInfinity: return "OverflowToInfinity";
    case Errc::kInvalidRank: return "InvalidRank";
    case Errc::kPeerUnreachable: return "PeerUnreachable";
    case Errc::kPeerClosed: return "PeerClosed";
    case Errc::kTimeout: return "Timeout";
    case Errc::kProtocolViolation: return "ProtocolViolation";
    case Errc::kCorruptHeader: return "CorruptHeader";
    case Errc::kTruncatedPayload: return "TruncatedPayload";
    case Errc::kCropLargerThanImage: return "CropLargerThanImage";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kNonFiniteLoss: return "NonFiniteLoss";
    case Errc::kNonFiniteGradient: return "NonFiniteGradient";
    case Errc::kWorkerPanic: return "WorkerPanic";
    case Errc::kConfig: return "ConfigError";
    case Errc::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace parexch
