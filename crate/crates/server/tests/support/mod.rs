#![allow(dead_code)]

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use reqwest::blocking::Client;
use serde_json::Value;

use soundscape_core::audio::{samples_for_ms, AssetResolver, PcmBuffer, RenderOptions};
use soundscape_core::timeline::Timeline;
use soundscape_server::config::ServerConfig;
use soundscape_server::{build_state, serve_in_background};

pub fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/e2e")
}

pub fn scene_png() -> Vec<u8> {
    fs::read(fixture_root().join("scene.png")).unwrap()
}

pub fn fixture_payload(id: &str) -> Vec<u8> {
    fs::read(fixture_root().join(format!("catalog/payloads/{id}.wav"))).unwrap()
}

/// Copies the fixture's annotation sidecars into a store.
pub fn install_annotations(store: &Path) {
    let dst = store.join("annotations");
    fs::create_dir_all(&dst).unwrap();
    for entry in fs::read_dir(fixture_root().join("annotations")).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dst.join(entry.file_name())).unwrap();
    }
}

pub fn start_mock(store: &Path) -> Api {
    let config = ServerConfig {
        store: store.to_path_buf(),
        ..ServerConfig::default()
    };
    let addr = serve_in_background(build_state(&config).unwrap()).unwrap();
    Api::new(addr)
}

pub struct Api {
    base: String,
    client: Client,
}

pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("status {}: non-JSON body ({e}): {}", self.status, String::from_utf8_lossy(&self.body)))
    }
}

impl Api {
    pub fn new(addr: SocketAddr) -> Self {
        Api {
            base: format!("http://{addr}"),
            client: Client::new(),
        }
    }

    fn finish(resp: reqwest::blocking::Response) -> Reply {
        let status = resp.status().as_u16();
        let body = resp.bytes().unwrap().to_vec();
        Reply { status, body }
    }

    pub fn get(&self, path: &str) -> Reply {
        Self::finish(self.client.get(format!("{}{path}", self.base)).send().unwrap())
    }

    pub fn post(&self, path: &str, body: Value) -> Reply {
        Self::finish(self.client.post(format!("{}{path}", self.base)).json(&body).send().unwrap())
    }

    pub fn post_raw(&self, path: &str, content_type: &str, bytes: Vec<u8>) -> Reply {
        Self::finish(
            self.client
                .post(format!("{}{path}", self.base))
                .header("content-type", content_type)
                .body(bytes)
                .send()
                .unwrap(),
        )
    }

    pub fn create_project(&self) -> String {
        let r = self.post("/projects", Value::Null);
        assert_eq!(r.status, 201);
        r.json()["project_id"].as_str().unwrap().to_string()
    }

    pub fn project(&self, id: &str) -> Value {
        let r = self.get(&format!("/projects/{id}"));
        assert_eq!(r.status, 200);
        r.json()
    }
}

/// Straight per-sample evaluation of the mixing rules, kept deliberately
/// separate from the production mixer.
pub fn reference_mix(timeline: &Timeline, resolver: &dyn AssetResolver, options: &RenderOptions) -> Vec<Vec<f64>> {
    let rate = options.target_rate;
    let length = samples_for_ms(timeline.duration_ms, rate);
    let load = |id: &str| reference_resample(&resolver.resolve(id).unwrap(), rate);
    let pick = |b: &PcmBuffer, c: usize| -> Vec<f64> {
        if b.channels.len() == 1 { b.channels[0].clone() } else { b.channels[c].clone() }
    };
    let music = timeline.music_asset.as_deref().map(load);
    let ambient = timeline.ambient_asset.as_deref().map(load);
    let effects: Vec<(usize, f64, PcmBuffer)> = timeline
        .events
        .iter()
        .map(|e| (samples_for_ms(e.offset_ms, rate), e.gain.get(), load(&e.asset_id)))
        .collect();

    let mut out = vec![vec![0.0; length]; 2];
    for (c, channel) in out.iter_mut().enumerate() {
        let m = music.as_ref().map(|b| pick(b, c));
        let a = ambient.as_ref().map(|b| pick(b, c));
        let fx: Vec<(usize, f64, Vec<f64>)> = effects.iter().map(|(s, g, b)| (*s, *g, pick(b, c))).collect();
        for (n, slot) in channel.iter_mut().enumerate() {
            let mut s = 0.0;
            if let Some(m) = &m {
                if n < m.len() {
                    s += timeline.music_gain.get() * m[n];
                }
            }
            if let Some(a) = &a {
                s += timeline.ambient_gain.get() * a[n % a.len()];
            }
            for (start, gain, samples) in &fx {
                if n >= *start && n - start < samples.len() {
                    s += gain * samples[n - start];
                }
            }
            *slot = s;
        }
    }
    let mut peak: f64 = 0.0;
    for ch in &out {
        for s in ch {
            if s.abs() > peak {
                peak = s.abs();
            }
        }
    }
    let scale = if options.normalize && peak > 0.891 { 0.891 / peak } else { 1.0 };
    for ch in out.iter_mut() {
        for s in ch.iter_mut() {
            let v = options.master_gain.get() * (*s * scale);
            *s = v.clamp(-1.0, 1.0);
        }
    }
    out
}

pub fn reference_resample(buf: &PcmBuffer, dst: u32) -> PcmBuffer {
    if buf.sample_rate == dst {
        return buf.clone();
    }
    let (src, dst64) = (u64::from(buf.sample_rate), u64::from(dst));
    let frames = buf.channels[0].len() as u64;
    let out_frames = (frames * dst64 + src / 2) / src;
    let mut channels = Vec::new();
    for ch in &buf.channels {
        let mut out = Vec::new();
        for k in 0..out_frames {
            let whole = (k * src / dst64) as usize;
            let rem = (k * src) % dst64;
            if whole + 1 >= ch.len() {
                out.push(ch[ch.len() - 1]);
            } else {
                let frac = rem as f64 / dst64 as f64;
                out.push(ch[whole] + (ch[whole + 1] - ch[whole]) * frac);
            }
        }
        channels.push(out);
    }
    PcmBuffer { sample_rate: dst, channels }
}
