#pragma once

#include <stdexcept>
#include <string>

namespace orl {

/// Thrown when an input violates a documented invariant. The message names
/// the violated bound and the offending value.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

#define ORL_REQUIRE(cond, msg)                                   \
    do {                                                         \
        if (!(cond)) throw ::orl::InvalidInput(std::string(msg)); \
    } while (0)

}  // namespace orl
