#pragma once

#include <limits>
#include <string>

namespace edof
{

// Object distance stored as inverse depth (diopters, 1/m) so that an object at
// infinity is the ordinary value 0.
class Depth
{
public:
    static Depth meters(double z);
    static Depth diopters(double d);
    static Depth infinity() { return Depth(0.0); }

    double diopters() const { return diopters_; }
    double meters() const
    {
        return diopters_ == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / diopters_;
    }
    bool is_infinite() const { return diopters_ == 0.0; }

    bool operator==(const Depth &) const = default;

private:
    explicit Depth(double d) : diopters_(d) {}
    double diopters_ = 0.0;
};

// Closed depth interval [near, far]; far may be infinite.
struct DepthRange
{
    Depth near = Depth::meters(0.5);
    Depth far = Depth::infinity();

    void validate() const;
    double min_diopters() const { return far.diopters(); }
    double max_diopters() const { return near.diopters(); }
};

// Parses "z_min,z_max" in meters; "inf" is accepted for z_max.
DepthRange parse_depth_range(const std::string &text);
Depth parse_depth(const std::string &text);
std::string format_depth(Depth d);

} // namespace edof
