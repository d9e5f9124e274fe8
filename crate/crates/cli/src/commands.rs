use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use relit_core::fixtures::{constant_env, gen_fixture, sky_env, FixtureMaterial};
use relit_core::imageio::{load_bundle, psnr_masked, read_environment, read_image, write_image, ImageFormat, PlaneEncoding};
use relit_core::oracle::{render_reference, OracleConfig};
use relit_core::prefilter::{build_dfg_lut, build_pyramid, DFG_RESOLUTION, DFG_SAMPLES};
use relit_core::recon::{fit_homography_masked, view_mask, warp, FitOptions, Homography, ViewMaskConfig};
use relit_core::render::{display_png, relight_view, ViewState};
use relit_core::{EnvironmentMap, Error, ImagePlane, LinearRgb, MaterialEdit, MaterialGBuffer, PrefilterConfig, Projection, ShadingOptions};

use crate::*;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::warn!("could not size the worker pool: {e}");
    }
    let seed = cli.seed;
    let global = json!({ "seed": seed, "threads": threads, "log_level": cli.log_level.to_string() });
    match cli.command {
        Command::Prefilter(a) => prefilter(a, seed, global),
        Command::Relight(a) => relight(a, seed, global, "relight"),
        Command::Orbit(a) => relight(a, seed, global, "orbit"),
        Command::Oracle(a) => oracle(a, seed, global),
        Command::Mask(a) => mask(a, global),
        Command::Homography(a) => homography(a, global),
        Command::Metrics(a) => metrics(a, global),
        Command::Serve(a) => serve(a, global),
        Command::GenFixture(a) => gen(a, global),
    }
}

/// Prints the resolved configuration as one JSON line.
fn announce(command: &str, global: Value, config: Value) {
    println!("{}", json!({ "command": command, "global": global, "config": config }));
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| {
        CliError::Core(Error::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes") + "\n";
    std::fs::write(path, text).map_err(|source| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn pick_frames(requested: &[usize], available: usize) -> Result<Vec<usize>> {
    if requested.is_empty() {
        return Ok((0..available).collect());
    }
    match requested.iter().find(|&&i| i >= available) {
        Some(i) => Err(Error::InvalidArgument(format!("frame {i} out of range (bundle has {available})")).into()),
        None => Ok(requested.to_vec()),
    }
}

fn load_inputs(bundle: &Path, env: Option<&PathBuf>) -> Result<(Vec<MaterialGBuffer>, PathBuf, EnvironmentMap)> {
    let b = load_bundle(bundle)?;
    let env_path = env
        .cloned()
        .or_else(|| b.env_path())
        .ok_or_else(|| CliError::Usage("--env is required when the bundle names no environment".into()))?;
    let env = read_environment(&env_path)?;
    Ok((b.frames, env_path, env))
}

fn prefilter(a: PrefilterArgs, seed: u64, global: Value) -> Result<()> {
    let mut cfg = PrefilterConfig::for_mode(a.mode.into()).with_seed(seed);
    if let Some(res) = a.base_res {
        cfg = cfg.with_base_resolution(res);
    }
    announce("prefilter", global, json!({ "env": a.env, "out": a.out, "prefilter": cfg }));
    let env = read_environment(&a.env)?;
    let started = Instant::now();
    let p = build_pyramid(&env, &cfg)?;
    log::info!("prefiltered {} levels in {:.0} ms", p.levels(), started.elapsed().as_secs_f64() * 1e3);
    create_dir(&a.out)?;
    let mut levels = Vec::new();
    for (l, map) in p.specular_levels.iter().enumerate() {
        let name = format!("level_{l}.pfm");
        write_image(a.out.join(&name), map.pixels(), ImageFormat::Pfm, PlaneEncoding::Linear)?;
        levels.push(json!({
            "file": name,
            "roughness": p.level_roughness[l],
            "samples": p.samples_per_level[l],
            "resolution": map.width(),
        }));
    }
    write_image(a.out.join("diffuse.pfm"), p.diffuse.pixels(), ImageFormat::Pfm, PlaneEncoding::Linear)?;
    let manifest = json!({
        "mode": p.mode,
        "seed": p.seed,
        "env": a.env,
        "layout": "octahedral",
        "levels": levels,
        "diffuse": { "file": "diffuse.pfm", "resolution": p.diffuse.width(), "samples": cfg.diffuse_samples },
    });
    write_json(&a.out.join("pyramid.json"), &manifest)?;
    println!("{}", json!({ "levels": p.levels(), "out": a.out }));
    Ok(())
}

fn relight(a: RelightArgs, seed: u64, global: Value, command: &str) -> Result<()> {
    let view = ViewState {
        edit: MaterialEdit {
            roughness_scale: a.roughness_scale,
            roughness_set: a.roughness_set,
            metallic_set: a.metallic_set,
            albedo_tint: a.albedo_tint,
        },
        env_rotation_deg: a.env_rotation_deg,
        exposure_ev: a.exposure_ev,
        tonemap: a.tonemap.into(),
    };
    view.edit.validate()?;
    let opts = ShadingOptions {
        multiscatter: !a.no_multiscatter,
        background: a.background.map_or(LinearRgb::BLACK, |[r, g, b]| LinearRgb::new(r, g, b)),
        ..Default::default()
    };
    let cfg = PrefilterConfig::for_mode(a.mode.into()).with_seed(seed);
    let (frames, env_path, env) = load_inputs(&a.bundle, a.env.as_ref())?;
    let picked = pick_frames(&a.frames, frames.len())?;
    announce(
        command,
        global,
        json!({
            "bundle": a.bundle,
            "env": env_path,
            "out": a.out,
            "frames": picked,
            "view": view,
            "width": a.width,
            "multiscatter": opts.multiscatter,
            "background": opts.background,
            "prefilter": cfg,
        }),
    );
    let lut = build_dfg_lut(DFG_RESOLUTION, DFG_SAMPLES)?;
    let started = Instant::now();
    let pyramid = build_pyramid(&env, &cfg)?;
    let prefilter_ms = started.elapsed().as_secs_f64() * 1e3;
    create_dir(&a.out)?;
    let mut frame_ms = Vec::with_capacity(picked.len());
    for &i in &picked {
        let started = Instant::now();
        let hdr = relight_view(&frames[i], &view, &pyramid, &lut, &opts).map_err(|e| e.in_frame(i))?;
        frame_ms.push(started.elapsed().as_secs_f64() * 1e3);
        let png = display_png(&hdr, view.tonemap_params(), a.width)?;
        write_bytes(&a.out.join(format!("frame_{i:03}.png")), &png)?;
        write_image(a.out.join(format!("frame_{i:03}.pfm")), &hdr, ImageFormat::Pfm, PlaneEncoding::Linear)?;
    }
    let total: f64 = frame_ms.iter().sum();
    log::info!("relit {} frames in {total:.0} ms after {prefilter_ms:.0} ms of prefiltering", picked.len());
    let mut report = json!({ "frames": picked.len(), "out": a.out });
    if command == "orbit" {
        report["prefilter_ms"] = json!(prefilter_ms);
        report["relight_ms"] = json!(total);
        report["frame_ms"] = json!(frame_ms);
    }
    println!("{report}");
    Ok(())
}

fn oracle(a: OracleArgs, seed: u64, global: Value) -> Result<()> {
    if a.specular_only && a.diffuse_only {
        return Err(CliError::Usage("--specular-only and --diffuse-only are exclusive".into()));
    }
    let cfg = OracleConfig {
        samples_per_pixel: a.spp,
        seed,
        specular: !a.diffuse_only,
        diffuse: !a.specular_only,
        ..Default::default()
    };
    let (frames, env_path, env) = load_inputs(&a.bundle, a.env.as_ref())?;
    let picked = pick_frames(&a.frames, frames.len())?;
    announce(
        "oracle",
        global,
        json!({
            "bundle": a.bundle,
            "env": env_path,
            "out": a.out,
            "frames": picked,
            "spp": cfg.samples_per_pixel,
            "specular": cfg.specular,
            "diffuse": cfg.diffuse,
        }),
    );
    create_dir(&a.out)?;
    let view = ViewState::default();
    for &i in &picked {
        let started = Instant::now();
        let img = render_reference(&frames[i], &env, &cfg).map_err(|e| e.in_frame(i))?;
        log::info!("reference {i} in {:.0} ms", started.elapsed().as_secs_f64() * 1e3);
        write_image(a.out.join(format!("reference_{i:03}.pfm")), &img, ImageFormat::Pfm, PlaneEncoding::Linear)?;
        write_bytes(
            &a.out.join(format!("reference_{i:03}.png")),
            &display_png(&img, view.tonemap_params(), None)?,
        )?;
    }
    println!("{}", json!({ "frames": picked.len(), "out": a.out }));
    Ok(())
}

fn mask(a: MaskArgs, global: Value) -> Result<()> {
    let mut cfg = ViewMaskConfig::default();
    if let Some(v) = a.smoothstep_lo {
        cfg.smoothstep_lo = v;
    }
    if let Some(v) = a.smoothstep_hi {
        cfg.smoothstep_hi = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.spatial_sigma {
        cfg.spatial_sigma = v;
    }
    cfg.validate()?;
    announce("mask", global, json!({ "bundle": a.bundle, "out": a.out, "mask": cfg }));
    let frames = load_bundle(&a.bundle)?.frames;
    let masks = view_mask(&frames, &cfg)?;
    create_dir(&a.out)?;
    for (i, m) in masks.iter().enumerate() {
        write_image(a.out.join(format!("mask_{i:03}.png")), m, ImageFormat::Png16, PlaneEncoding::Linear)?;
        write_image(a.out.join(format!("mask_{i:03}.pfm")), m, ImageFormat::Pfm, PlaneEncoding::Linear)?;
    }
    println!("{}", json!({ "frames": masks.len(), "out": a.out }));
    Ok(())
}

/// Color inputs are compared as linear values; PNGs are assumed sRGB.
fn read_color(path: &Path) -> Result<ImagePlane> {
    let enc = match ImageFormat::from_path(path)? {
        ImageFormat::Png8 | ImageFormat::Png16 => PlaneEncoding::Srgb,
        _ => PlaneEncoding::Linear,
    };
    Ok(read_image(path, enc)?)
}

fn read_mask(path: &Path) -> Result<ImagePlane> {
    let m = read_image(path, PlaneEncoding::Linear)?;
    if m.channels() == 1 {
        return Ok(m);
    }
    // multi-channel masks use their first channel
    let (w, h) = m.dims();
    Ok(ImagePlane::from_fn(w, h, |x, y| [m.get(x, y, 0)]))
}

fn homography(a: HomographyArgs, global: Value) -> Result<()> {
    let mut opts = FitOptions::default();
    if let Some(l) = a.levels {
        opts.levels = l;
    }
    let init = match a.init {
        Some(m) => Homography::from_array(m)?,
        None => Homography::identity(),
    };
    announce(
        "homography",
        global,
        json!({
            "rendered": a.rendered,
            "target": a.target,
            "mask": a.mask,
            "init": init.to_array(),
            "out": a.out,
            "fit": opts,
        }),
    );
    let rendered = read_color(&a.rendered)?;
    let target = read_color(&a.target)?;
    let mask = a.mask.as_deref().map(read_mask).transpose()?;
    let r = fit_homography_masked(&rendered, &target, mask.as_ref(), &init, &opts)?;
    if r.diverged {
        log::warn!("fit diverged; keeping the initial estimate");
    }
    let report = json!({
        "h": r.h.to_array(),
        "loss": r.loss,
        "init_loss": r.init_loss,
        "diverged": r.diverged,
        "iterations": r.iterations,
    });
    write_json(&a.out, &report)?;
    if let Some(path) = &a.warped {
        let (img, _) = warp(&rendered, &r.h)?;
        let enc = if ImageFormat::from_path(path)?.is_hdr() {
            PlaneEncoding::Linear
        } else {
            PlaneEncoding::Srgb
        };
        write_image(path, &img, ImageFormat::from_path(path)?, enc)?;
    }
    println!("{report}");
    Ok(())
}

fn metrics(a: MetricsArgs, global: Value) -> Result<()> {
    announce(
        "metrics",
        global,
        json!({ "test": a.test, "reference": a.reference, "mask": a.mask, "peak": a.peak, "out": a.out }),
    );
    let test = read_color(&a.test)?;
    let reference = read_color(&a.reference)?;
    let mask = a.mask.as_deref().map(read_mask).transpose()?;
    let peak = match a.peak {
        Some(p) => p,
        None => f64::from(reference.data().iter().copied().fold(0.0f32, f32::max)),
    };
    let report = psnr_masked(&test, &reference, mask.as_ref(), peak)?;
    let value = serde_json::to_value(&report).expect("metric report serializes");
    if let Some(out) = &a.out {
        write_json(out, &value)?;
    }
    println!("{value}");
    Ok(())
}

fn serve(a: ServeArgs, global: Value) -> Result<()> {
    announce("serve", global, json!({ "addr": a.addr }));
    let state = relit_service::AppState::new()?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start the runtime: {e}")))?;
    rt.block_on(relit_service::serve(a.addr, state)).map_err(|source| {
        CliError::Core(Error::Io {
            path: PathBuf::from(a.addr.to_string()),
            source,
        })
    })
}

fn gen(a: GenFixtureArgs, global: Value) -> Result<()> {
    if a.res < 16 {
        return Err(Error::InvalidArgument(format!("--res must be at least 16, got {}", a.res)).into());
    }
    if a.frames == 0 {
        return Err(Error::InvalidArgument("--frames must be positive".into()).into());
    }
    let defaults = FixtureMaterial::default();
    let m = FixtureMaterial {
        albedo: a.albedo.map_or(defaults.albedo, |[r, g, b]| LinearRgb::new(r, g, b)),
        roughness: a.roughness.unwrap_or(defaults.roughness),
        metallic: a.metallic.unwrap_or(defaults.metallic),
        frames: a.frames,
        elevation_deg: a.elevation_deg,
        projection: if a.orthographic {
            Projection::Orthographic
        } else {
            defaults.projection
        },
    };
    for (name, v) in [("roughness", m.roughness), ("metallic", m.metallic)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("--{name} must be in [0, 1], got {v}")).into());
        }
    }
    let kind: FixtureKind = a.kind.into();
    let env_name = match a.env {
        EnvArg::None => None,
        _ => Some("env.pfm"),
    };
    announce(
        "gen-fixture",
        global,
        json!({
            "kind": kind,
            "res": a.res,
            "out": a.out,
            "frames": m.frames,
            "elevation_deg": m.elevation_deg,
            "roughness": m.roughness,
            "metallic": m.metallic,
            "albedo": m.albedo,
            "projection": m.projection,
            "env": env_name,
            "env_res": a.env_res,
        }),
    );
    let frames = gen_fixture(kind, a.res, &m);
    let manifest = relit_core::imageio::save_bundle(&a.out, &frames, env_name)?;
    let env = match a.env {
        EnvArg::Sky => Some(sky_env(a.env_res)),
        EnvArg::Constant => Some(constant_env(a.env_res, LinearRgb::WHITE)),
        EnvArg::None => None,
    };
    if let (Some(env), Some(name)) = (env, env_name) {
        write_image(a.out.join(name), env.pixels(), ImageFormat::Pfm, PlaneEncoding::Linear)?;
    }
    println!("{}", json!({ "manifest": manifest, "frames": frames.len() }));
    Ok(())
}
