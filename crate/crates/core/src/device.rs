//! Single PCM device: conductance state, pulse response, drift and read noise.
//!
//! Conductances are in µS and times in seconds. A device is an immutable record;
//! every operation returns a new [`DeviceState`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// How write noise scales with the applied pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WriteNoise {
    /// std = `sigma_prog * |amplitude|`; a zero-amplitude pulse is noiseless.
    #[default]
    Proportional,
    /// std = `sigma_prog` for every pulse, including zero-amplitude ones.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    /// Conductance ceiling (µS).
    pub g_max: f64,
    /// Pulse-to-conductance gain (µS per unit amplitude).
    pub alpha: f64,
    /// Write-noise std (µS, per unit amplitude for [`WriteNoise::Proportional`]).
    pub sigma_prog: f64,
    /// Relative read-noise std.
    pub sigma_read_rel: f64,
    pub nu_mean: f64,
    pub nu_std: f64,
    /// Drift reference time (s).
    pub t0: f64,
    pub set_cap_mean: f64,
    pub set_cap_std: f64,
    #[serde(default)]
    pub write_noise: WriteNoise,
    /// Redraw the drift exponent on every programming pulse.
    #[serde(default)]
    pub redraw_nu: bool,
}

impl DeviceParams {
    /// Higher-conductance PCM. Calibration defaults, not measured device data.
    pub fn pcm1() -> Self {
        Self {
            g_max: 25.0,
            alpha: 2.0,
            sigma_prog: 0.4,
            sigma_read_rel: 0.03,
            nu_mean: 0.05,
            nu_std: 0.02,
            t0: 20.0,
            set_cap_mean: 22.0,
            set_cap_std: 2.0,
            write_noise: WriteNoise::Proportional,
            redraw_nu: false,
        }
    }

    /// Low-conductance PCM: same physics scaled to a 5 µS ceiling.
    pub fn pcm2() -> Self {
        Self {
            g_max: 5.0,
            alpha: 0.4,
            sigma_prog: 0.08,
            set_cap_mean: 4.4,
            set_cap_std: 0.4,
            ..Self::pcm1()
        }
    }

    /// PCM-I geometry with every noise, drift and variability source disabled.
    pub fn ideal() -> Self {
        Self {
            sigma_prog: 0.0,
            sigma_read_rel: 0.0,
            nu_mean: 0.0,
            nu_std: 0.0,
            set_cap_std: 0.0,
            ..Self::pcm1()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "pcm1" => Ok(Self::pcm1()),
            "pcm2" => Ok(Self::pcm2()),
            "ideal" => Ok(Self::ideal()),
            _ => Err(Error::Unknown { kind: "device preset", name: name.to_string() }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.g_max,
            self.alpha,
            self.sigma_prog,
            self.sigma_read_rel,
            self.nu_mean,
            self.nu_std,
            self.t0,
            self.set_cap_mean,
            self.set_cap_std,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("device parameters"));
        }
        if self.g_max <= 0.0 {
            return Err(invalid("g_max", "must be > 0"));
        }
        if self.alpha <= 0.0 {
            return Err(invalid("alpha", "must be > 0"));
        }
        if self.sigma_prog < 0.0 || self.sigma_read_rel < 0.0 {
            return Err(invalid("sigma", "noise std must be >= 0"));
        }
        if self.t0 <= 0.0 {
            return Err(invalid("t0", "must be > 0"));
        }
        if self.nu_mean < 0.0 || self.nu_std < 0.0 {
            return Err(invalid("nu", "drift exponent mean and std must be >= 0"));
        }
        if self.set_cap_mean > self.g_max || self.set_cap_mean <= 0.0 || self.set_cap_std < 0.0 {
            return Err(invalid("set_cap_mean", "must lie in (0, g_max] with std >= 0"));
        }
        Ok(())
    }

    fn draw_nu<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.nu_std == 0.0 {
            return self.nu_mean;
        }
        // Rejection sampling; acceptance is >= 1/2 because nu_mean >= 0.
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let nu = self.nu_mean + self.nu_std * z;
            if nu >= 0.0 {
                return nu;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// Conductance right after the last programming event (µS).
    pub g_prog: f64,
    /// Simulation time of the last programming event (s).
    pub t_prog: f64,
    pub nu: f64,
    /// Maximum SET conductance of this particular device (µS).
    pub set_cap: f64,
}

impl DeviceState {
    /// A device with no conductance and no drift. Used for absent slots.
    pub const EMPTY: DeviceState = DeviceState { g_prog: 0.0, t_prog: 0.0, nu: 0.0, set_cap: 0.0 };

    pub fn sample<R: Rng + ?Sized>(params: &DeviceParams, rng: &mut R) -> Self {
        let nu = params.draw_nu(rng);
        let set_cap = if params.set_cap_std == 0.0 {
            params.set_cap_mean
        } else {
            let z: f64 = rng.sample(StandardNormal);
            (params.set_cap_mean + params.set_cap_std * z).clamp(params.g_max * 1e-3, params.g_max)
        };
        DeviceState { g_prog: 0.0, t_prog: 0.0, nu, set_cap }
    }

    /// Noiseless drifted conductance at time `t`.
    pub fn conductance_at(&self, t: f64, params: &DeviceParams) -> Result<f64> {
        if t < self.t_prog {
            return Err(Error::TimeOrder { t, t_prog: self.t_prog });
        }
        Ok(self.drifted(t, params.t0))
    }

    /// `conductance_at` without the time check; callers guarantee `t >= t_prog`.
    #[inline]
    pub(crate) fn drifted(&self, t: f64, t0: f64) -> f64 {
        if self.nu == 0.0 || self.g_prog == 0.0 || t == self.t_prog {
            return self.g_prog;
        }
        self.g_prog * ((t - self.t_prog + t0) / t0).powf(-self.nu)
    }

    pub fn noisy_read<R: Rng + ?Sized>(&self, t: f64, params: &DeviceParams, rng: &mut R) -> Result<f64> {
        let g = self.conductance_at(t, params)?;
        if params.sigma_read_rel == 0.0 {
            return Ok(g);
        }
        let z: f64 = rng.sample(StandardNormal);
        Ok((g * (1.0 + params.sigma_read_rel * z)).max(0.0))
    }

    /// Apply one programming pulse of signed `amplitude` at time `now`.
    ///
    /// Positive amplitudes move toward SET with a `(1 - g/set_cap)` saturation;
    /// negative amplitudes (RESET direction) act linearly.
    pub fn apply_pulse<R: Rng + ?Sized>(
        &self,
        amplitude: f64,
        now: f64,
        params: &DeviceParams,
        rng: &mut R,
    ) -> Result<DeviceState> {
        if !amplitude.is_finite() {
            return Err(Error::NonFinite("pulse amplitude"));
        }
        if now < self.t_prog {
            return Err(Error::TimeOrder { t: now, t_prog: self.t_prog });
        }
        let g_now = self.drifted(now, params.t0);
        let step = if amplitude > 0.0 {
            params.alpha * amplitude * (1.0 - g_now / self.set_cap)
        } else {
            params.alpha * amplitude
        };
        let noise_std = match params.write_noise {
            WriteNoise::Proportional => params.sigma_prog * amplitude.abs(),
            WriteNoise::Constant => params.sigma_prog,
        };
        let noise = if noise_std > 0.0 {
            noise_std * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let nu = if params.redraw_nu { params.draw_nu(rng) } else { self.nu };
        Ok(DeviceState {
            g_prog: (g_now + step + noise).clamp(0.0, self.set_cap),
            t_prog: now,
            nu,
            set_cap: self.set_cap,
        })
    }

    /// Drive the device to its SET capacity.
    pub fn full_set(&self, now: f64) -> DeviceState {
        DeviceState { g_prog: self.set_cap, t_prog: now.max(self.t_prog), ..*self }
    }

    /// Drive the device to zero conductance.
    pub fn full_reset(&self, now: f64) -> DeviceState {
        DeviceState { g_prog: 0.0, t_prog: now.max(self.t_prog), ..*self }
    }
}

/// Draw `n` devices from a single stream. Test and demo helper.
pub fn sample_many<R: Rng + ?Sized>(params: &DeviceParams, n: usize, rng: &mut R) -> Vec<DeviceState> {
    (0..n).map(|_| DeviceState::sample(params, rng)).collect()
}
