#include "dv/dataset.hpp"

#include <array>
#include <cmath>

namespace dv {

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> v = {"circle", "square", "triangle"};
    return v;
}

const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v = {"red", "green", "blue", "white", "black"};
    return v;
}

const std::vector<std::string>& motion_names() {
    static const std::vector<std::string> v = {"moves_right", "moves_left", "moves_up",  "moves_down",
                                               "grows",       "shrinks",    "rotates"};
    return v;
}

std::vector<std::string> motion_caption_words(int motion_id) {
    switch (motion_id) {
        case 0: return {"moves", "right"};
        case 1: return {"moves", "left"};
        case 2: return {"moves", "up"};
        case 3: return {"moves", "down"};
        case 4: return {"grows"};
        case 5: return {"shrinks"};
        case 6: return {"rotates"};
        default: throw invalid_argument("unknown motion id " + std::to_string(motion_id));
    }
}

namespace {

constexpr double kBackground = 0.5;

const std::array<std::array<double, 3>, 5> kColors = {{
    {1.0, 0.0, 0.0},  // red
    {0.0, 1.0, 0.0},  // green
    {0.0, 0.0, 1.0},  // blue
    {1.0, 1.0, 1.0},  // white
    {0.0, 0.0, 0.0},  // black
}};

// point-in-shape tests use pixel centers; r is the circumradius
bool inside_shape(int shape, double px, double py, double cx, double cy, double r, double angle) {
    double dx = px - cx, dy = py - cy;
    switch (shape) {
        case 0:  // circle
            return dx * dx + dy * dy <= r * r;
        case 1: {  // square inscribed in the circumcircle, rotated by angle
            double ca = std::cos(-angle), sa = std::sin(-angle);
            double rx = ca * dx - sa * dy;
            double ry = sa * dx + ca * dy;
            double half = r / std::sqrt(2.0);
            return std::fabs(rx) <= half && std::fabs(ry) <= half;
        }
        default:
            return false;
    }
}

bool inside_triangle(double px, double py, double cx, double cy, double r, double angle) {
    // vertices on the circumcircle at angle, angle+120, angle+240 degrees,
    // measured from straight up (negative y)
    std::array<double, 3> vx{}, vy{};
    for (int k = 0; k < 3; ++k) {
        double a = angle + 2.0 * M_PI * k / 3.0;
        vx[static_cast<size_t>(k)] = cx + r * std::sin(a);
        vy[static_cast<size_t>(k)] = cy - r * std::cos(a);
    }
    auto cross = [&](int i, int j) {
        return (vx[static_cast<size_t>(j)] - vx[static_cast<size_t>(i)]) * (py - vy[static_cast<size_t>(i)]) -
               (vy[static_cast<size_t>(j)] - vy[static_cast<size_t>(i)]) * (px - vx[static_cast<size_t>(i)]);
    };
    double c0 = cross(0, 1), c1 = cross(1, 2), c2 = cross(2, 0);
    bool has_neg = c0 < 0 || c1 < 0 || c2 < 0;
    bool has_pos = c0 > 0 || c1 > 0 || c2 > 0;
    return !(has_neg && has_pos);
}

void render_frame(Tensor& video, int64_t t, int resolution, int shape, const std::array<double, 3>& color, double cx,
                  double cy, double r, double angle) {
    double* p = video.data() + t * resolution * resolution * 3;
    for (int64_t y = 0; y < resolution; ++y)
        for (int64_t x = 0; x < resolution; ++x) {
            double px = static_cast<double>(x) + 0.5;
            double py = static_cast<double>(y) + 0.5;
            bool in = shape == 2 ? inside_triangle(px, py, cx, cy, r, angle)
                                 : inside_shape(shape, px, py, cx, cy, r, angle);
            double* pix = p + (y * resolution + x) * 3;
            if (in) {
                pix[0] = color[0];
                pix[1] = color[1];
                pix[2] = color[2];
            } else {
                pix[0] = kBackground;
                pix[1] = kBackground;
                pix[2] = kBackground;
            }
        }
}

}  // namespace

std::vector<DatasetItem> synth_dataset(const DatasetSpec& spec) {
    if (spec.resolution < 16) throw invalid_argument("synth_dataset: resolution must be >= 16");
    if (spec.frames_per_video < 2) throw invalid_argument("synth_dataset: need at least 2 frames");
    if (spec.num_videos < 1) throw invalid_argument("synth_dataset: need at least 1 video");
    if (spec.velocity < 1) throw invalid_argument("synth_dataset: velocity must be >= 1");

    const int R = spec.resolution;
    const int T = spec.frames_per_video;
    const double r_lo = std::max(2.2, 0.10 * R);
    const double r_hi = std::max(r_lo + 0.8, 0.18 * R);
    const int span = spec.velocity * (T - 1);
    // translation needs an integer start cell with the whole path inside
    if (R - 2 - 2 * static_cast<int>(std::ceil(r_hi)) < span)
        throw invalid_argument("synth_dataset: resolution " + std::to_string(R) + " cannot fit velocity " +
                               std::to_string(spec.velocity) + " over " + std::to_string(T) + " frames");

    RandomStream rng(mix_seed(spec.seed, 0xDA7A));
    std::vector<DatasetItem> items;
    items.reserve(static_cast<size_t>(spec.num_videos));

    for (int n = 0; n < spec.num_videos; ++n) {
        int shape = static_cast<int>(rng.uniform_int(3));
        int color = static_cast<int>(rng.uniform_int(5));
        // a rotating circle is indistinguishable from a static one
        int motion = shape == 0 ? static_cast<int>(rng.uniform_int(6)) : static_cast<int>(rng.uniform_int(7));
        double radius = rng.uniform(r_lo, r_hi);

        double grow_step = 0.0, angle_step = 0.0;
        int vx = 0, vy = 0;
        double r0 = radius;
        switch (motion) {
            case 0: vx = spec.velocity; break;
            case 1: vx = -spec.velocity; break;
            case 2: vy = -spec.velocity; break;
            case 3: vy = spec.velocity; break;
            case 4: {  // grows
                double max_r = (R - 2) / 2.0 - 1.0;
                grow_step = std::min(0.75, (max_r - radius) / (T - 1));
                break;
            }
            case 5: {  // shrinks: start large, end at the sampled radius
                double max_r = (R - 2) / 2.0 - 1.0;
                grow_step = -std::min(0.75, (max_r - radius) / (T - 1));
                r0 = radius - grow_step * (T - 1);
                break;
            }
            case 6:
                // 22.5 deg/frame; over 8 frames the net turn stays far from
                // the square's and triangle's symmetry angles
                angle_step = 2.0 * M_PI / 16.0;
                radius = std::max(radius, r_lo + 1.4);
                r0 = radius;
                break;
            default: break;
        }

        double max_radius = std::max(r0, r0 + grow_step * (T - 1));
        int margin = static_cast<int>(std::ceil(max_radius));
        int lo_x = margin + std::max(0, -vx * (T - 1));
        int hi_x = R - 1 - margin - std::max(0, vx * (T - 1));
        int lo_y = margin + std::max(0, -vy * (T - 1));
        int hi_y = R - 1 - margin - std::max(0, vy * (T - 1));
        if (hi_x < lo_x || hi_y < lo_y)
            throw invalid_argument("synth_dataset: no feasible placement; shrink radius or velocity");
        double cx0 = static_cast<double>(lo_x + rng.uniform_int(hi_x - lo_x + 1)) + 0.5;
        double cy0 = static_cast<double>(lo_y + rng.uniform_int(hi_y - lo_y + 1)) + 0.5;
        double angle0 = shape == 2 ? rng.uniform(0.0, 2.0 * M_PI / 3.0)
                                   : (shape == 1 ? rng.uniform(0.0, M_PI / 2.0) : 0.0);

        DatasetItem item;
        item.shape_id = shape;
        item.color_id = color;
        item.motion_id = motion;
        item.caption.push_back(color_names()[static_cast<size_t>(color)]);
        item.caption.push_back(shape_names()[static_cast<size_t>(shape)]);
        for (const auto& w : motion_caption_words(motion)) item.caption.push_back(w);

        Tensor vid({T, R, R, 3});
        for (int t = 0; t < T; ++t) {
            double cx = cx0 + static_cast<double>(vx * t);
            double cy = cy0 + static_cast<double>(vy * t);
            double r = r0 + grow_step * t;
            double angle = angle0 + angle_step * t;
            render_frame(vid, t, R, shape, kColors[static_cast<size_t>(color)], cx, cy, r, angle);
        }
        item.video = VideoTensor{std::move(vid)};
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace dv
