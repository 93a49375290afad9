use multisr_tensor::{Adam, Graph, ParamSet, Scalar, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{lr_schedule, BackboneChoice, TrainConfig, Wiring};
use crate::augment::{apply_moa, draw_moa, GeoTransform, MoaOp};
use crate::corpus::{
    draw_patch_offset, sample_source_domain, sample_target_labels, DomainCrops, LoadedCorpus,
    TrainingSample,
};
use crate::domain::Domain;
use crate::image::Image;
use crate::losses::{
    adversarial_d, adversarial_g, cls_loss, cycle_loss, l1_loss, perceptual_loss, total_d, total_g,
    tv_loss, DiscriminatorParts, GeneratorParts,
};
use crate::models::{ConvStack, Discriminator, FeatureBackbone, Generator};
use crate::{Error, Result};

/// Independent RNG streams derived from one seed, so that changing how one
/// is consumed never shifts the others.
pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_DATA: u64 = 2;
pub(crate) const STREAM_AUG: u64 = 3;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Ground truth for `trg` from an item's co-located crops, if it has one.
pub fn select_supervision<T: Scalar>(crops: &DomainCrops<T>, trg: Domain) -> Option<Image<T>> {
    crops.get(trg).cloned()
}

/// One sampled batch plus the MOA operation applied to it.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub samples: Vec<TrainingSample<T>>,
    pub moa: MoaOp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Steps completed after this one.
    pub iter: u64,
    pub lr: f64,
    pub total_g: f64,
    pub total_d: f64,
    pub g: GeneratorParts,
    pub d: DiscriminatorParts,
    /// Samples that contributed to the L1 and perceptual terms.
    pub supervised: usize,
    pub moa: String,
    pub trg_labels: Vec<Domain>,
}

/// Models, optimizers and RNG streams of one training run.
pub struct Trainer<T: Scalar> {
    pub cfg: TrainConfig,
    pub wiring: Wiring,
    pub generator: Generator<T>,
    /// `D_trg`, then `D_src` in the two-discriminator mode.
    pub discriminators: Vec<Discriminator<T>>,
    pub opt_g: Adam<T>,
    pub opt_d: Vec<Adam<T>>,
    pub iteration: u64,
    pub(crate) data_rng: ChaCha8Rng,
    pub(crate) aug_rng: ChaCha8Rng,
    backbone: Option<Box<dyn FeatureBackbone<T>>>,
}

pub fn build_backbone<T: Scalar>(choice: &BackboneChoice) -> Result<Option<Box<dyn FeatureBackbone<T>>>> {
    Ok(match choice {
        BackboneChoice::FixedRandom => Some(Box::new(ConvStack::<T>::fixed_random())),
        BackboneChoice::Disabled => None,
        BackboneChoice::File(p) => Some(Box::new(ConvStack::<T>::load(p)?)),
    })
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let backbone = build_backbone(&cfg.backbone)?;
        Self::with_backbone(cfg, backbone)
    }

    pub fn with_backbone(cfg: TrainConfig, backbone: Option<Box<dyn FeatureBackbone<T>>>) -> Result<Self> {
        cfg.validate()?;
        let wiring = cfg.wiring();
        let mut init = stream(cfg.seed, STREAM_INIT);
        let generator = Generator::new(cfg.generator.clone(), &mut init)?;
        let discriminators = (0..wiring.discriminators)
            .map(|_| Discriminator::new(cfg.discriminator_config(), &mut init))
            .collect::<Result<Vec<_>>>()?;
        let adam = cfg.adam.to_config();
        let opt_g = Adam::new(adam, generator.params());
        let opt_d = discriminators.iter().map(|d| Adam::new(adam, d.params())).collect();
        Ok(Trainer {
            data_rng: stream(cfg.seed, STREAM_DATA),
            aug_rng: stream(cfg.seed, STREAM_AUG),
            cfg,
            wiring,
            generator,
            discriminators,
            opt_g,
            opt_d,
            iteration: 0,
            backbone,
        })
    }

    pub fn backbone(&self) -> Option<&dyn FeatureBackbone<T>> {
        self.backbone.as_deref()
    }

    /// Draws a batch: entry, source domain and aligned crop per slot, a
    /// shared flip/rotation per entry, target labels, supervision, then one
    /// MOA operation for the whole batch.
    pub fn next_batch(&mut self, corpus: &LoadedCorpus<T>) -> Result<Batch<T>> {
        let (n, size) = (self.cfg.batch_size, self.cfg.patch);
        let mut slots = Vec::with_capacity(n);
        for _ in 0..n {
            let item = &corpus.items[self.data_rng.random_range(0..corpus.len())];
            let src = sample_source_domain(&item.available(), &mut self.data_rng);
            let off = draw_patch_offset(item.hr.height(), item.hr.width(), size, corpus.scale, &mut self.data_rng)?;
            let geo = GeoTransform::draw(&mut self.aug_rng);
            let crops = DomainCrops::at(item, off, size)?.map(|im| geo.apply(im));
            slots.push((src, crops));
        }
        let trg = sample_target_labels(n, self.wiring.target_sampling, &mut self.data_rng);
        let mut images: Vec<Image<T>> = slots
            .iter()
            .map(|(src, c)| c.get(*src).expect("source domain is available").clone())
            .collect();
        let mut targets: Vec<Option<Image<T>>> = slots
            .iter()
            .zip(&trg)
            .map(|((_, c), &t)| select_supervision(c, t))
            .collect();

        let mut moa = MoaOp::None;
        if self.cfg.aug.enabled {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut self.aug_rng);
            moa = draw_moa(&self.cfg.aug, size, size, &mut self.aug_rng)?;
            if moa != MoaOp::None {
                let scale = self.cfg.aug.cutblur_scale;
                let mixed = (0..n)
                    .map(|i| apply_moa(&moa, &images[i], &images[perm[i]], scale))
                    .collect::<Result<Vec<_>>>()?;
                if moa.applies_to_target() {
                    targets = (0..n)
                        .map(|i| {
                            let own = targets[i].as_ref()?;
                            let partner = if moa.uses_partner() {
                                targets[perm[i]].as_ref()?
                            } else {
                                own
                            };
                            Some(apply_moa(&moa, own, partner, scale))
                        })
                        .map(Option::transpose)
                        .collect::<Result<Vec<_>>>()?;
                }
                images = mixed;
            }
        }
        let samples = images
            .into_iter()
            .zip(targets)
            .zip(slots.iter().zip(&trg))
            .map(|((image, target_image), ((src, _), &trg_label))| TrainingSample {
                image,
                src_label: *src,
                trg_label,
                target_image,
            })
            .collect();
        Ok(Batch { samples, moa })
    }

    /// Draws a batch from `corpus` and trains on it.
    pub fn step(&mut self, corpus: &LoadedCorpus<T>) -> Result<StepStats> {
        let batch = self.next_batch(corpus)?;
        let mut stats = self.train_step(&batch.samples)?;
        stats.moa = batch.moa.name().into();
        Ok(stats)
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, samples: &[TrainingSample<T>]) -> Result<StepStats> {
        if samples.is_empty() {
            return Err(Error::Shape("empty training batch".into()));
        }
        let iter = self.iteration;
        let lr = lr_schedule(iter, &self.cfg);
        let w = self.cfg.loss.clone();
        let n = samples.len();
        let src: Vec<Domain> = samples.iter().map(|s| s.src_label).collect();
        let trg: Vec<Domain> = samples.iter().map(|s| s.trg_label).collect();
        let x_t = Image::stack(&samples.iter().map(|s| s.image.clone()).collect::<Vec<_>>())?;
        let sup: Vec<usize> = (0..n).filter(|&i| samples[i].target_image.is_some()).collect();
        let sup_t = if sup.is_empty() {
            None
        } else {
            let imgs: Vec<Image<T>> = sup
                .iter()
                .map(|&i| samples[i].target_image.clone().expect("filtered"))
                .collect();
            Some(Image::stack(&imgs)?)
        };

        // Generator forward, kept for the generator update.
        let gg = Graph::new();
        let gb = self.generator.bind(&gg, true);
        let x = gg.constant(x_t.clone());
        let fake = self.generator.forward(&gg, &gb, x, &trg)?;
        let rec = self.generator.forward(&gg, &gb, fake, &src)?;

        // Discriminator update on detached fakes.
        let fake_t = (*gg.value(fake)).clone();
        let mut d_parts = DiscriminatorParts::default();
        let branches: Vec<(Tensor<T>, Vec<Domain>, Tensor<T>)> = if self.wiring.source_branch {
            let real_hr = sup_t.clone().filter(|_| sup.len() == n).ok_or_else(|| {
                Error::Shape("target discriminator needs an HR target for every sample".into())
            })?;
            vec![
                (real_hr, trg.clone(), fake_t),
                (x_t.clone(), src.clone(), (*gg.value(rec)).clone()),
            ]
        } else {
            vec![(x_t.clone(), src.clone(), fake_t)]
        };
        for (k, (real, real_labels, fake_d)) in branches.into_iter().enumerate() {
            let gd = Graph::new();
            let disc = &self.discriminators[k];
            let db = disc.bind(&gd, true);
            let both = gd.constant(Tensor::cat_batch(&[&real, &fake_d]));
            let out = disc.forward(&gd, &db, both)?;
            let real_idx: Vec<usize> = (0..n).collect();
            let fake_idx: Vec<usize> = (n..2 * n).collect();
            let gan = adversarial_d(
                &gd,
                gd.select_batch(out.trg, &real_idx),
                gd.select_batch(out.trg, &fake_idx),
            );
            let cls = cls_loss(&gd, gd.select_batch(out.cls, &real_idx), &real_labels)?;
            let parts = DiscriminatorParts {
                gan: gd.item(gan).as_f64(),
                cls_r: gd.item(cls).as_f64(),
            };
            total_d(&parts, &w, iter + 1)?;
            d_parts.gan += parts.gan;
            d_parts.cls_r += parts.cls_r;
            let loss = gd.weighted_sum(&[(gan, T::lit(w.gan_d)), (cls, T::lit(w.cls_r))]);
            let grads = take_grads(gd.backward(loss), &db.vars);
            drop(gd);
            apply_adam(&mut self.opt_d[k], lr, self.discriminators[k].params_mut(), grads);
        }

        // Generator update against the freshly updated discriminators.
        let mut gan_terms = Vec::new();
        let mut cls_terms = Vec::new();
        let judged: Vec<(Var, &[Domain])> = if self.wiring.source_branch {
            vec![(fake, &trg[..]), (rec, &src[..])]
        } else {
            vec![(fake, &trg[..])]
        };
        for (k, (img, labels)) in judged.into_iter().enumerate() {
            let disc = &self.discriminators[k];
            let db = disc.bind(&gg, false);
            let out = disc.forward(&gg, &db, img)?;
            gan_terms.push(adversarial_g(&gg, out.trg));
            cls_terms.push(cls_loss(&gg, out.cls, labels)?);
        }
        let sum = |vs: &[Var]| gg.weighted_sum(&vs.iter().map(|&v| (v, T::one())).collect::<Vec<_>>());
        let gan = sum(&gan_terms);
        let cls = sum(&cls_terms);
        let cyc = cycle_loss(&gg, x, rec)?;
        let tv = tv_loss(&gg, fake)?;
        let mut terms = vec![
            (gan, T::lit(w.gan)),
            (cls, T::lit(w.cls)),
            (cyc, T::lit(w.cyc)),
            (tv, T::lit(w.tv)),
        ];
        let mut g_parts = GeneratorParts {
            gan: gg.item(gan).as_f64(),
            cls: gg.item(cls).as_f64(),
            cyc: gg.item(cyc).as_f64(),
            tv: gg.item(tv).as_f64(),
            ..Default::default()
        };
        if let Some(t) = sup_t {
            let fake_sup = if sup.len() == n { fake } else { gg.select_batch(fake, &sup) };
            let target = gg.constant(t);
            let l1 = l1_loss(&gg, fake_sup, target)?;
            g_parts.l1 = gg.item(l1).as_f64();
            terms.push((l1, T::lit(w.l1)));
            if w.per != 0.0 {
                let per = perceptual_loss(&gg, fake_sup, target, self.backbone.as_deref())?;
                g_parts.per = gg.item(per).as_f64();
                terms.push((per, T::lit(w.per)));
            }
        }
        let tg = total_g(&g_parts, &w, iter + 1)?;
        let loss = gg.weighted_sum(&terms);
        let grads = take_grads(gg.backward(loss), &gb.vars);
        drop(gg);
        apply_adam(&mut self.opt_g, lr, self.generator.params_mut(), grads);

        self.iteration += 1;
        Ok(StepStats {
            iter: self.iteration,
            lr,
            total_g: tg,
            total_d: total_d(&d_parts, &w, self.iteration)?,
            g: g_parts,
            d: d_parts,
            supervised: sup.len(),
            moa: MoaOp::None.name().into(),
            trg_labels: trg,
        })
    }
}

fn take_grads<T: Scalar>(mut grads: multisr_tensor::Gradients<T>, vars: &[Var]) -> Vec<Option<Tensor<T>>> {
    vars.iter().map(|&v| grads.take(v)).collect()
}

/// Call with every graph that bound `params` already dropped, so updates
/// happen in place instead of copying shared storage.
fn apply_adam<T: Scalar>(opt: &mut Adam<T>, lr: f64, params: &mut ParamSet<T>, owned: Vec<Option<Tensor<T>>>) {
    let refs: Vec<Option<&Tensor<T>>> = owned.iter().map(Option::as_ref).collect();
    opt.update(lr, params, &refs);
}
