#pragma once

#include <stdexcept>
#include <string>

namespace splinekernel {

/// A numerical procedure failed (factorisation, non-finite objective, ...).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace splinekernel
