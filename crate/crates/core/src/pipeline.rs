//! End-to-end tokenization: input stack → units → encoded → positioned → unshuffled →
//! projected, with optional organ enhancement.

use serde::Serialize;

use crate::config::{Modality, PipelineConfig};
use crate::error::{Error, Result};
use crate::init::stream;
use crate::ose::{self, TokenGeometry};
use crate::prng::Prng;
use crate::sce::{
    apply_tpe, build_tpe, compose_units, mhp_project, replicate_slices, unshuffle, MhpParams,
    PatchEncoder, TokenGrid, UnitStack,
};
use crate::tensor::Tensor;
use crate::volume::{CtVolume, OrganMask, SourceFormat, VolumeMeta};

/// Shapes at every stage, recorded in run manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageShapes {
    pub input: Vec<usize>,
    pub units: Vec<usize>,
    pub encoded: Vec<usize>,
    pub positioned: Vec<usize>,
    pub unshuffled: Vec<usize>,
    pub tokens: Vec<usize>,
    #[serde(rename = "L")]
    pub token_count: usize,
    pub unshuffle_factor: usize,
    pub fused: Option<Vec<usize>>,
}

/// Frozen visual path: the patch encoder plus the parameter-free stages around it.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontEnd {
    pub config: PipelineConfig,
    pub encoder: PatchEncoder,
}

fn grid_shape(g: &TokenGrid) -> Vec<usize> {
    g.tensor().shape().to_vec()
}

impl FrontEnd {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Prng::derive(config.seed, stream::ENCODER);
        let encoder = PatchEncoder::init(config.patch, config.d_v, &mut rng)?;
        Ok(Self { config, encoder })
    }

    pub fn with_encoder(config: PipelineConfig, encoder: PatchEncoder) -> Result<Self> {
        config.validate()?;
        if encoder.patch() != config.patch || encoder.dim() != config.d_v {
            return Err(Error::Config(format!(
                "encoder (K={}, d_v={}) does not match config (K={}, d_v={})",
                encoder.patch(),
                encoder.dim(),
                config.patch,
                config.d_v
            )));
        }
        Ok(Self { config, encoder })
    }

    /// A volume `D x H x W` is composed into units; a slice stack `n x H x W` is replicated.
    pub fn units(&self, input: &Tensor, modality: Modality) -> Result<UnitStack> {
        match modality {
            Modality::Volume => {
                let v = CtVolume::new(input.clone(), VolumeMeta::unit_spacing(SourceFormat::Raw))?;
                compose_units(&v)
            }
            Modality::Slice => replicate_slices(input),
        }
    }

    /// Run the frozen stages; returns the unshuffled grid and its stage shapes.
    pub fn unshuffled(&self, input: &Tensor, modality: Modality) -> Result<(TokenGrid, StageShapes)> {
        let units = self.units(input, modality)?;
        let encoded = self.encoder.encode(&units)?;
        let (n_s, rows, cols, _) = encoded.dims();
        let c = &self.config;
        let tables = build_tpe(n_s, rows, cols, c.d_z, c.d_y, c.d_x)?;
        let positioned = apply_tpe(&encoded, &tables)?;
        let m = c.unshuffle_factor(modality);
        let grid = unshuffle(&positioned, m)?;
        let shapes = StageShapes {
            input: input.shape().to_vec(),
            units: units.tensor().shape().to_vec(),
            encoded: grid_shape(&encoded),
            positioned: grid_shape(&positioned),
            unshuffled: grid_shape(&grid),
            tokens: vec![grid.token_count(), c.d_f],
            token_count: grid.token_count(),
            unshuffle_factor: m,
            fused: None,
        };
        Ok((grid, shapes))
    }

    pub fn geometry(&self, n_s: usize, modality: Modality) -> TokenGeometry {
        TokenGeometry::new(
            self.config.patch,
            self.config.unshuffle_factor(modality),
            n_s,
            modality,
        )
    }
}

/// Organ enhancement request for [`tokenize`].
pub struct OrganRequest<'a> {
    pub mask: &'a OrganMask,
    pub organ: u8,
}

#[derive(Clone, Debug)]
pub struct Tokenized {
    /// `L x d_f`, or `(L + L_c) x d_f` when an organ was enhanced.
    pub tokens: Tensor,
    pub shapes: StageShapes,
    pub token_mask: Option<ose::TokenMask>,
    pub organ_tokens: Option<usize>,
    pub empty_organ: bool,
}

pub fn tokenize(
    front: &FrontEnd,
    projection: &MhpParams,
    input: &Tensor,
    modality: Modality,
    organ: Option<OrganRequest<'_>>,
) -> Result<Tokenized> {
    let (grid, mut shapes) = front.unshuffled(input, modality)?;
    let global = mhp_project(&grid, projection, modality)?;
    let Some(req) = organ else {
        return Ok(Tokenized {
            tokens: global,
            shapes,
            token_mask: None,
            organ_tokens: None,
            empty_organ: false,
        });
    };
    if req.mask.dims().as_slice() != input.shape() {
        return Err(Error::Validation(format!(
            "mask dims {:?} differ from input dims {:?}",
            req.mask.dims(),
            input.shape()
        )));
    }
    let (n_s, _, _, _) = grid.dims();
    let geom = front.geometry(n_s, modality);
    let enhanced = ose::enhance(&global, req.mask, req.organ, &geom, front.config.agg_len(modality))?;
    shapes.fused = Some(enhanced.fused.shape().to_vec());
    Ok(Tokenized {
        tokens: enhanced.fused,
        shapes,
        token_mask: Some(enhanced.token_mask),
        organ_tokens: Some(enhanced.organ_tokens),
        empty_organ: enhanced.empty_organ,
    })
}

/// Projection parameters initialised from the run seed.
pub fn init_projection(config: &PipelineConfig) -> Result<MhpParams> {
    let mut rng = Prng::derive(config.seed, stream::PROJECTION);
    MhpParams::init(
        config.projection_in_dim(Modality::Slice),
        config.projection_in_dim(Modality::Volume),
        config.d_f,
        &mut rng,
    )
}
