//! Checkpoint container: versioned binary file holding every module's
//! parameters, optimizer state, schedule position, the latent scale and a
//! verbatim echo of the training configuration.

use crate::error::{Result, TrainError};
use mgdm_tensor::ParamStore;
use ndarray::{ArrayD, IxDyn};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const CKPT_MAGIC: &[u8; 8] = b"MGDMCKP1";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub t: u64,
    pub m: ArrayD<f32>,
    pub v: ArrayD<f32>,
}

pub struct Checkpoint {
    pub version: u32,
    pub stage: u32,
    pub step: u64,
    pub latent_scale: f64,
    pub config_echo: Vec<u8>,
    pub params: ParamStore<f32>,
    pub adam: BTreeMap<String, AdamState>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            t: 0,
            m: ArrayD::zeros(IxDyn(&[0])),
            v: ArrayD::zeros(IxDyn(&[0])),
        }
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_arr(buf: &mut Vec<u8>, a: &ArrayD<f32>) {
    buf.extend_from_slice(&(a.ndim() as u32).to_le_bytes());
    for &d in a.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let std = a.as_standard_layout();
    for &v in std.as_slice().unwrap() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    file: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(TrainError::format(
                self.file.clone(),
                format!("truncated at byte {}", self.pos),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| TrainError::format(self.file.clone(), "invalid utf-8 name"))
    }

    fn array(&mut self) -> Result<ArrayD<f32>> {
        let ndim = self.u32()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(self.u64()? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = self.take(n * 4)?;
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            data.push(f32::from_le_bytes(raw[i * 4..i * 4 + 4].try_into().unwrap()));
        }
        ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|_| TrainError::format(self.file.clone(), "bad array shape"))
    }
}

impl Checkpoint {
    pub fn new(
        stage: u32,
        step: u64,
        latent_scale: f64,
        config_echo: Vec<u8>,
        params: ParamStore<f32>,
        adam: BTreeMap<String, AdamState>,
    ) -> Self {
        Checkpoint {
            version: CKPT_VERSION,
            stage,
            step,
            latent_scale,
            config_echo,
            params,
            adam,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CKPT_MAGIC);
        buf.extend_from_slice(&self.version.to_le_bytes());
        buf.extend_from_slice(&self.stage.to_le_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&self.latent_scale.to_le_bytes());
        buf.extend_from_slice(&(self.config_echo.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.config_echo);
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for (name, arr) in self.params.iter() {
            put_str(&mut buf, name);
            put_arr(&mut buf, arr);
        }
        buf.extend_from_slice(&(self.adam.len() as u64).to_le_bytes());
        for (name, st) in &self.adam {
            put_str(&mut buf, name);
            buf.extend_from_slice(&st.t.to_le_bytes());
            put_arr(&mut buf, &st.m);
            put_arr(&mut buf, &st.v);
        }
        buf
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| TrainError::io(path.display().to_string(), e))
    }

    pub fn from_bytes(buf: &[u8], file: &str) -> Result<Self> {
        if buf.len() < 8 || &buf[0..8] != CKPT_MAGIC {
            return Err(TrainError::format(file, "bad magic (expected MGDMCKP1)"));
        }
        let mut r = Reader {
            buf,
            pos: 8,
            file: file.to_string(),
        };
        let version = r.u32()?;
        if version != CKPT_VERSION {
            return Err(TrainError::format(
                file,
                format!("incompatible checkpoint version {version} (expected {CKPT_VERSION})"),
            ));
        }
        let stage = r.u32()?;
        let step = r.u64()?;
        let latent_scale = r.f64()?;
        let echo_len = r.u64()? as usize;
        let config_echo = r.take(echo_len)?.to_vec();
        let n_params = r.u64()? as usize;
        let mut params = ParamStore::<f32>::new();
        for _ in 0..n_params {
            let name = r.string()?;
            let arr = r.array()?;
            params.insert(&name, arr);
        }
        let n_adam = r.u64()? as usize;
        let mut adam = BTreeMap::new();
        for _ in 0..n_adam {
            let name = r.string()?;
            let t = r.u64()?;
            let m = r.array()?;
            let v = r.array()?;
            adam.insert(name, AdamState { t, m, v });
        }
        Ok(Checkpoint {
            version,
            stage,
            step,
            latent_scale,
            config_echo,
            params,
            adam,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| TrainError::io(path.display().to_string(), e))?;
        Self::from_bytes(&buf, &path.display().to_string())
    }

    /// Parse the embedded config echo.
    pub fn config(&self) -> Result<crate::config::Config> {
        let text = String::from_utf8(self.config_echo.clone())
            .map_err(|_| TrainError::Internal("config echo is not utf-8".into()))?;
        crate::config::Config::parse(&text)
    }
}
