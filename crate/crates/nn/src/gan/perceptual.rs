//! Frozen random-feature network standing in for a pretrained perceptual
//! model: four stride-2 3×3 convolutions with LReLU, fixed seed.

use pidd_core::{Real, RealTensor, Result, RngStream};

use crate::conv::Conv2d;
use crate::layers::LeakyRelu;
use crate::param::{Layer, Mode};

pub const PERCEPTUAL_SEED: u64 = 0x5eed_f00d;
pub const PERCEPTUAL_WIDTHS: [usize; 4] = [8, 16, 32, 32];

pub struct PerceptualNet<T> {
    convs: Vec<Conv2d<T>>,
    acts: Vec<LeakyRelu<T>>,
}

impl<T: Real> PerceptualNet<T> {
    pub fn new(in_channels: usize) -> Self {
        let mut rng = RngStream::new(PERCEPTUAL_SEED, 0);
        let mut cin = in_channels;
        let mut convs = Vec::new();
        for &cout in &PERCEPTUAL_WIDTHS {
            let mut c = Conv2d::new(cin, cout, 3, 2, 1, &mut rng);
            c.frozen = true;
            convs.push(c);
            cin = cout;
        }
        Self {
            acts: (0..convs.len()).map(|_| LeakyRelu::new()).collect(),
            convs,
        }
    }

    pub fn features(&mut self, x: &RealTensor<T>) -> Result<RealTensor<T>> {
        let mut h = x.clone();
        for (c, a) in self.convs.iter_mut().zip(&mut self.acts) {
            h = c.forward(&h, Mode::Eval)?;
            h = a.forward(&h, Mode::Eval)?;
        }
        Ok(h)
    }

    /// Input gradient for the features computed by the last [`Self::features`].
    pub fn backward(&mut self, g: &RealTensor<T>) -> Result<RealTensor<T>> {
        let mut g = g.clone();
        for (c, a) in self.convs.iter_mut().zip(&mut self.acts).rev() {
            g = a.backward(&g)?;
            g = c.backward(&g)?;
        }
        Ok(g)
    }
}
