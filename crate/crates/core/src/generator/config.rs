use crate::error::{Error, Result};

/// Channels of the hidden convolution in each of the edge and vertex branches.
pub const BRANCH_CHANNELS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub image_size: usize,
    pub in_channels: usize,
    pub grid_size: usize,
    pub backbone_channels: usize,
    pub fused_channels: usize,
    pub num_vertices: usize,
    pub gcn_layers: usize,
    pub gcn_hidden: usize,
    pub refine_iterations: usize,
    /// Supervise the edge/vertex branches with binary cross-entropy against
    /// ground-truth boundary and vertex cell maps.
    pub branch_supervision: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            in_channels: 3,
            grid_size: 16,
            backbone_channels: 32,
            fused_channels: 24,
            num_vertices: 20,
            gcn_layers: 3,
            gcn_hidden: 64,
            refine_iterations: 1,
            branch_supervision: false,
        }
    }
}

impl GeneratorConfig {
    /// Full-size dimensions: 224 px input, 28×28 grid, 512 backbone and
    /// 320 fused channels, 60 vertices.
    pub fn full_size() -> Self {
        Self {
            image_size: 224,
            grid_size: 28,
            backbone_channels: 512,
            fused_channels: 320,
            num_vertices: 60,
            ..Self::default()
        }
    }

    /// Small enough for exhaustive finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            image_size: 16,
            grid_size: 4,
            backbone_channels: 4,
            fused_channels: 3,
            num_vertices: 8,
            gcn_layers: 2,
            gcn_hidden: 6,
            ..Self::default()
        }
    }

    /// Number of stride-2 stages needed to go from `image_size` to `grid_size`.
    pub fn stages(&self) -> usize {
        (self.image_size / self.grid_size).trailing_zeros() as usize
    }

    pub fn node_input_dim(&self) -> usize {
        2 + self.fused_channels
    }

    /// Output channels of stride-2 stage `i`, doubling up to `backbone_channels`.
    pub fn stage_channels(&self, i: usize) -> usize {
        (self.backbone_channels >> (self.stages() - 1 - i)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| {
            Err(Error::Config {
                key: key.to_string(),
                msg,
            })
        };
        for (key, v) in [
            ("image_size", self.image_size),
            ("in_channels", self.in_channels),
            ("grid_size", self.grid_size),
            ("backbone_channels", self.backbone_channels),
            ("fused_channels", self.fused_channels),
            ("gcn_layers", self.gcn_layers),
            ("gcn_hidden", self.gcn_hidden),
            ("refine_iterations", self.refine_iterations),
        ] {
            if v == 0 {
                return bad(key, "must be at least 1".into());
            }
        }
        if self.num_vertices < 3 {
            return bad("k_vertices", format!("must be at least 3, got {}", self.num_vertices));
        }
        if self.grid_size < 2 {
            return bad("grid_size", "must be at least 2".into());
        }
        let ratio = self.image_size / self.grid_size;
        if !self.image_size.is_multiple_of(self.grid_size) || !ratio.is_power_of_two() || ratio < 2 {
            return bad(
                "grid_size",
                format!(
                    "image_size {} must be grid_size {} times a power of two (at least 2)",
                    self.image_size, self.grid_size
                ),
            );
        }
        Ok(())
    }
}
