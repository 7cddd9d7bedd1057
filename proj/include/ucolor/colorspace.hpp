#pragma once

#include "ucolor/image.hpp"

namespace ucolor::color {

// Hexcone HSV with H scaled to [0,1) (angle / 360). Achromatic pixels get
// H = 0, S = 0. Components outside [0,1] raise DomainError.
Triple rgb_to_hsv(const Triple& rgb);
Triple hsv_to_rgb(const Triple& hsv);

// sRGB (companded, D65) to CIELab with L in [0,100].
Triple rgb_to_lab(const Triple& rgb);

struct LabToRgb {
  Triple rgb;
  bool out_of_gamut = false;  // result was clamped into [0,1]
};
LabToRgb lab_to_rgb_checked(const Triple& lab);
inline Triple lab_to_rgb(const Triple& lab) { return lab_to_rgb_checked(lab).rgb; }

// Lab -> [0,1]: (L / 100, (a + 128) / 255, (b + 128) / 255), clamped.
Triple normalize_lab(const Triple& lab);

struct NetworkInput {
  Image rgb;
  Image hsv;
  Image lab;
};

// The three color-space views the encoder consumes, all in [0,1].
NetworkInput to_network_input(const Image& rgb);

Image rgb_to_hsv(const Image& rgb);
// Unnormalized Lab per pixel, row-major.
std::vector<Triple> lab_pixels(const Image& rgb);

}  // namespace ucolor::color
