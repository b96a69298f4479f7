#pragma once

#include <stdexcept>
#include <string>

namespace udock {

/// Base class for all errors raised by the toolkit.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define UDOCK_DEFINE_ERROR(Name)                                  \
  struct Name : Error {                                           \
    using Error::Error;                                           \
    Name() : Error(#Name) {}                                      \
    const char* kind() const noexcept override { return #Name; }  \
  }

// geometry / scene
UDOCK_DEFINE_ERROR(PointBehindCamera);
UDOCK_DEFINE_ERROR(NoLandmarkVisible);
UDOCK_DEFINE_ERROR(GimbalLock);
UDOCK_DEFINE_ERROR(IoFailure);

// pnp
UDOCK_DEFINE_ERROR(DegenerateGeometry);
UDOCK_DEFINE_ERROR(ZeroPolynomial);
UDOCK_DEFINE_ERROR(NoMinimumFound);

// landmarks
UDOCK_DEFINE_ERROR(EmptyPatch);
UDOCK_DEFINE_ERROR(PartialObservation);

// detector
UDOCK_DEFINE_ERROR(BoxOutOfRange);
UDOCK_DEFINE_ERROR(NonFiniteInput);
UDOCK_DEFINE_ERROR(ShapeMismatch);
UDOCK_DEFINE_ERROR(DivergenceDetected);

// deform
UDOCK_DEFINE_ERROR(NonPositiveSigma);
UDOCK_DEFINE_ERROR(AllPixelsExcluded);
UDOCK_DEFINE_ERROR(SingularFit);
UDOCK_DEFINE_ERROR(CorpusTooSmall);
UDOCK_DEFINE_ERROR(PatchOutOfBounds);
UDOCK_DEFINE_ERROR(NoRoomAbove);
UDOCK_DEFINE_ERROR(PlacementFailed);

// eval
UDOCK_DEFINE_ERROR(DegenerateLabels);

// cli / config
UDOCK_DEFINE_ERROR(ConfigInvalid);

/// Violated call contract that has no more specific error type.
UDOCK_DEFINE_ERROR(PreconditionViolation);

#undef UDOCK_DEFINE_ERROR

}  // namespace udock
