#pragma once

#include <stdexcept>
#include <string>

namespace rbmflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// geometry
class PointOffSurface : public Error { public: using Error::Error; };
class DegenerateGradient : public Error { public: using Error::Error; };
class NumericalBreakdown : public Error { public: using Error::Error; };
class EmptySurfaceRegion : public Error { public: using Error::Error; };
class ProjectionDiverged : public Error { public: using Error::Error; };

// nbv
class GridMismatch : public Error { public: using Error::Error; };
class HorizonMismatch : public Error { public: using Error::Error; };
class OscillationNotResolved : public Error { public: using Error::Error; };
class InvalidTrajectory : public Error { public: using Error::Error; };

// flow_ode
class NotTangent : public Error { public: using Error::Error; };
class OriginMismatch : public Error { public: using Error::Error; };
class NotCauchy : public Error { public: using Error::Error; };

// rbm
class StepTooLarge : public Error { public: using Error::Error; };
class LocalTimeNotReached : public Error { public: using Error::Error; };
class NoBoundaryContact : public Error { public: using Error::Error; };

// cli
class ConfigInvalid : public Error { public: using Error::Error; };

}  // namespace rbmflow
