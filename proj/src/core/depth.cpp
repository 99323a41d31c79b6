#include "edof/depth.hpp"

#include <cmath>
#include <cstdio>

#include "edof/error.hpp"

namespace edof
{

Depth Depth::meters(double z)
{
    if (std::isnan(z) || z <= 0.0)
        throw DomainError("depth must be positive (got " + std::to_string(z) + " m)");
    return std::isinf(z) ? Depth(0.0) : Depth(1.0 / z);
}

Depth Depth::diopters(double d)
{
    if (!std::isfinite(d) || d < 0.0)
        throw DomainError("inverse depth must be finite and non-negative");
    return Depth(d);
}

void DepthRange::validate() const
{
    if (near.is_infinite())
        throw DomainError("depth range: z_min must be finite");
    if (near.diopters() < far.diopters())
        throw DomainError("depth range: z_max must not be smaller than z_min");
}

Depth parse_depth(const std::string &text)
{
    if (text == "inf" || text == "infinity" || text == "Inf")
        return Depth::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception &) {
        throw DomainError("cannot parse depth '" + text + "'");
    }
    if (used != text.size())
        throw DomainError("cannot parse depth '" + text + "'");
    return Depth::meters(v);
}

DepthRange parse_depth_range(const std::string &text)
{
    const auto comma = text.find(',');
    if (comma == std::string::npos)
        throw DomainError("depth range must be 'z_min,z_max'");
    DepthRange range{parse_depth(text.substr(0, comma)), parse_depth(text.substr(comma + 1))};
    range.validate();
    return range;
}

std::string format_depth(Depth d)
{
    if (d.is_infinite())
        return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", d.meters());
    return buf;
}

} // namespace edof
