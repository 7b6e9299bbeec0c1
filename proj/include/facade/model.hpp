#pragma once

#include "facade/fields.hpp"
#include "facade/sg.hpp"

namespace facade {

struct ModelConfig {
  GeometryConfig geometry;
  HeadConfig diffuse;
  HeadConfig specular;
  HeadConfig material;
  int ide_degree = 4;
  int background_freq_bands = 4;
  int background_hidden = 32;
  int background_layers = 2;
  real beta_init = 0.1;
  int env_lobes = 24;
  VisibilityGridConfig visibility;
};

// All learnable state of the pipeline.
struct NeuralScene {
  NeuralScene() = default;
  NeuralScene(const ModelConfig& cfg, Rng& rng)
      : config(cfg),
        geometry(cfg.geometry, rng),
        diffuse(cfg.diffuse, cfg.geometry.z_dim, rng),
        specular(cfg.specular, cfg.geometry.z_dim, cfg.ide_degree, rng),
        material(cfg.material, cfg.geometry.z_dim, rng),
        background(cfg.background_freq_bands, cfg.background_hidden, cfg.background_layers, rng),
        env(cfg.env_lobes, 10.0, 0.5),
        visibility(cfg.visibility) {
    beta_raw = VecX::Constant(1, cfg.beta_init);
  }

  real beta() const { return std::max(beta_raw[0], 1e-4); }

  ModelConfig config;
  GeometryField geometry;
  DiffuseField diffuse;
  SpecularField specular;
  MaterialField material;
  BackgroundField background;
  VecX beta_raw;  // learnable Laplace scale, clamped below at 1e-4
  SgMixture env;
  VisibilityGrid visibility;
};

}  // namespace facade
