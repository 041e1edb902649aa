use std::fs;
use std::path::{Path, PathBuf};

use llens_core::convspace::{
    express_in_basis, kernel_reconstruction_error, kernel_signal_space, kernels_to_matrix,
    load_basis, span_residual,
};
use llens_core::factor::svd;
use llens_core::ideal::{
    class_targets, dataset_logits, init_avg_img, init_avg_min_img, init_min_img, learn_ideal_image,
    DescentConfig, InitKind,
};
use llens_core::invert::NetworkInverter;
use llens_core::mnist::{class_mean, load_split, Dataset, Split, IMAGE_PIXELS, IMAGE_SIDE};
use llens_core::nn::{evaluate, forward, train_with, Layer, Network, TrainConfig};
use llens_core::store::{
    format_real, load_checkpoint, read_pgm, save_checkpoint, write_csv, write_image, write_images,
    Table,
};
use llens_core::subspace::{class_residual_report, signal_vis_vectors};
use llens_core::tensor::{Matrix, Vector};
use llens_core::{Error, Result};

use crate::{
    AnalyzeArgs, Arch, ConvSignalArgs, DataArgs, IdealArgs, Init, InvertArgs, ResidualsArgs,
    TrainArgs,
};

fn load_data(args: &DataArgs, split: Split) -> Result<Dataset> {
    let data = load_split(&args.data, split)?;
    Ok(match (split, args.train_limit) {
        (Split::Train, Some(0)) => {
            return Err(Error::Input("--train-limit must be at least 1".into()))
        }
        (Split::Train, Some(n)) => data.take(n),
        _ => data,
    })
}

/// Image dimensions for a flat vector: MNIST-sized vectors render 28×28,
/// kernel-sized ones 3×3, anything else as a single row.
fn image_dims(len: usize) -> (usize, usize) {
    if len == IMAGE_PIXELS {
        (IMAGE_SIDE, IMAGE_SIDE)
    } else if len == 9 {
        (3, 3)
    } else {
        (1, len)
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn require_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must be finite, got {v}")))
    }
}

fn metrics_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".metrics.csv");
    out.with_file_name(name)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let (default_epochs, default_lr) = match a.arch {
        Arch::Fc1 | Arch::Fc5 => (20, 0.001),
        Arch::CnnSmall => (4, 0.01),
    };
    let cfg = TrainConfig {
        learning_rate: a.lr.unwrap_or(default_lr),
        momentum: a.momentum,
        epochs: a.epochs.unwrap_or(default_epochs),
        batch_size: a.batch_size,
        seed: a.seed,
    };
    cfg.validate()?;
    let train_set = load_data(&a.data, Split::Train)?;
    let test_set = load_data(&a.data, Split::Test)?;
    let init = match a.arch {
        Arch::Fc1 => Network::fc1(a.seed)?,
        Arch::Fc5 => Network::fc5(a.seed)?,
        Arch::CnnSmall => Network::cnn_small(a.seed)?,
    };

    let mut table = Table::new(["epoch", "train_loss", "train_accuracy", "test_accuracy"]);
    let mut observer_error = None;
    let (net, _) = train_with(&init, &train_set, &cfg, |m, net| {
        match evaluate(net, &test_set) {
            Ok(acc) => {
                println!(
                    "epoch {} loss {:.6} train_acc {:.4} test_acc {:.4}",
                    m.epoch + 1,
                    m.train_loss,
                    m.train_accuracy,
                    acc
                );
                let row = vec![(m.epoch + 1) as f64, m.train_loss, m.train_accuracy, acc];
                table.push(row).expect("four columns");
            }
            Err(e) => observer_error = Some(e),
        }
    })?;
    if let Some(e) = observer_error {
        return Err(e);
    }
    save_checkpoint(&net, &a.out)?;
    write_csv(&table, &metrics_path(&a.out))?;
    Ok(())
}

fn dense_layer(net: &Network, k: usize) -> Result<&llens_core::nn::DenseLayer> {
    match net.layers.get(k) {
        Some(Layer::Dense(d)) => Ok(d),
        Some(other) => Err(Error::Input(format!(
            "layer {k} is a {} layer, not dense",
            other.kind_name()
        ))),
        None => Err(Error::Input(format!(
            "layer {k} does not exist; the network has {} layers",
            net.layers.len()
        ))),
    }
}

fn singular_value_table(sigma: &Vector, rank: usize) -> Table {
    let mut t = Table::new(["index", "sigma"]);
    for (i, &s) in sigma.iter().take(rank).enumerate() {
        t.push(vec![i as f64, s]).expect("two columns");
    }
    t
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let net = load_checkpoint(&a.model)?;
    let layer = dense_layer(&net, a.layer)?;
    prepare_dir(&a.out_dir)?;
    let f = svd(&layer.weights)?;
    let condition = f.condition_number()?;
    let vis = signal_vis_vectors(&f);
    let (rows, cols) = image_dims(layer.input_dim());
    let paths: Vec<PathBuf> = (0..vis.len())
        .map(|i| a.out_dir.join(format!("signal_{i}.pgm")))
        .collect();
    write_images(&vis, rows, cols, a.shared_norm, &paths)?;
    write_csv(
        &singular_value_table(&f.sigma, f.rank),
        &a.out_dir.join("singular_values.csv"),
    )?;
    println!("rank {}", f.rank);
    println!("condition_number {}", format_real(condition));
    Ok(())
}

pub fn residuals(a: &ResidualsArgs) -> Result<()> {
    let net = load_checkpoint(&a.model)?;
    let layer = dense_layer(&net, 0)?;
    if layer.input_dim() != IMAGE_PIXELS {
        return Err(Error::Input(format!(
            "first layer takes {} inputs, not MNIST images",
            layer.input_dim()
        )));
    }
    prepare_dir(&a.out_dir)?;
    let data = load_data(&a.data, Split::Train)?;
    let classes = layer.output_dim().min(10);
    let means = (0..classes)
        .map(|c| class_mean(&data, c))
        .collect::<Result<Vec<_>>>()?;
    let report = class_residual_report(&layer.weights, &means)?;
    let mut table = Table::new(["class", "energy_kept", "energy_removed", "residual_norm"]);
    for (c, (mean, r)) in means.iter().zip(&report).enumerate() {
        write_image(
            mean,
            IMAGE_SIDE,
            IMAGE_SIDE,
            &a.out_dir.join(format!("class_mean_{c}.pgm")),
        )?;
        write_image(
            &r.p,
            IMAGE_SIDE,
            IMAGE_SIDE,
            &a.out_dir.join(format!("projection_{c}.pgm")),
        )?;
        write_image(
            &r.residual,
            IMAGE_SIDE,
            IMAGE_SIDE,
            &a.out_dir.join(format!("residual_{c}.pgm")),
        )?;
        table.push(vec![
            c as f64,
            r.energy_kept,
            r.energy_removed,
            r.residual.norm2(),
        ])?;
    }
    write_csv(&table, &a.out_dir.join("residuals.csv"))
}

pub fn conv_signal(a: &ConvSignalArgs) -> Result<()> {
    let net = load_checkpoint(&a.model)?;
    let basis = a.basis.as_deref().map(load_basis).transpose()?;
    let k = match a.layer {
        Some(k) => k,
        None => net
            .layers
            .iter()
            .position(|l| matches!(l, Layer::Conv(_)))
            .ok_or_else(|| Error::Input("network has no convolution layer".into()))?,
    };
    let Some(Layer::Conv(conv)) = net.layers.get(k) else {
        return Err(Error::Input(format!(
            "layer {k} is not a convolution layer"
        )));
    };
    prepare_dir(&a.out_dir)?;
    let km = kernels_to_matrix(conv, format!("layer {k}"))?;
    let space = kernel_signal_space(&km)?;
    let paths: Vec<PathBuf> = (0..space.vis_vectors.len())
        .map(|i| a.out_dir.join(format!("kernel_signal_{i}.pgm")))
        .collect();
    write_images(&space.vis_vectors, 3, 3, a.shared_norm, &paths)?;
    write_csv(
        &singular_value_table(&space.factors.sigma, space.rank),
        &a.out_dir.join("kernel_singular_values.csv"),
    )?;
    println!("kernels {}", km.matrix.rows());
    println!("rank {}", space.rank);
    println!("condition_number {}", format_real(space.condition));
    println!(
        "reconstruction_error {}",
        format_real(kernel_reconstruction_error(&km, &space))
    );

    if let Some(basis) = basis {
        let signal = Matrix::from_rows(
            &space
                .vis_vectors
                .iter()
                .map(|v| v.as_slice().to_vec())
                .collect::<Vec<_>>(),
        )?;
        println!(
            "signal_to_basis_residual {}",
            format_real(span_residual(&signal, &basis)?)
        );
        println!(
            "basis_to_signal_residual {}",
            format_real(span_residual(&basis, &signal)?)
        );
        let mut header: Vec<String> = vec!["signal".into()];
        header.extend((0..9).map(|i| format!("c{i}")));
        header.push("residual".into());
        let mut table = Table::new(header);
        for (i, v) in space.vis_vectors.iter().enumerate() {
            let (c, res) = express_in_basis(&basis, v)?;
            let mut row = vec![i as f64];
            row.extend(c.iter());
            row.push(res);
            table.push(row)?;
        }
        write_csv(&table, &a.out_dir.join("basis_coefficients.csv"))?;
    }
    Ok(())
}

fn parse_logits(text: &str) -> Result<Vector> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Input(format!("bad logit value {t:?}")))
        })
        .collect::<Result<Vec<f64>>>()
        .map(Vector::new)
}

pub fn invert(a: &InvertArgs) -> Result<()> {
    let target = a.logits.as_deref().map(parse_logits).transpose()?;
    let net = load_checkpoint(&a.model)?;
    let out = match (target, &a.from_image) {
        (Some(z), _) => z,
        (None, Some(path)) => {
            let (rows, cols, px) = read_pgm(path)?;
            if rows * cols != net.input_dim() {
                return Err(Error::Shape(format!(
                    "{rows}x{cols} image does not match {} network inputs",
                    net.input_dim()
                )));
            }
            let x = Vector::new(px.iter().map(|&p| f64::from(p) / 255.0).collect());
            forward(&net, &x)?.0
        }
        (None, None) => return Err(Error::Input("give --logits or --from-image".into())),
    };
    let inverter = NetworkInverter::new(&net)?;
    let report = inverter.invert(&out)?;
    prepare_dir(&a.out_dir)?;
    let (rows, cols) = image_dims(net.input_dim());
    write_image(
        &report.recovered_input,
        rows,
        cols,
        &a.out_dir.join("recovered.pgm"),
    )?;
    let mut table = Table::new(["layer", "residual_norm", "condition_number", "clamped"]);
    for k in 0..report.per_layer_inputs.len() {
        table.push(vec![
            k as f64,
            report.per_layer_residual_norm[k],
            report.condition_numbers[k],
            if report.clamped[k] { 1.0 } else { 0.0 },
        ])?;
    }
    write_csv(&table, &a.out_dir.join("inversion.csv"))?;
    let (again, _) = forward(&net, &report.recovered_input)?;
    let gap = again.sub(&out)?.norm2() / out.norm2().max(f64::MIN_POSITIVE);
    println!("reforward_relative_error {}", format_real(gap));
    println!("clamped {}", report.any_clamped());
    Ok(())
}

pub fn ideal(a: &IdealArgs) -> Result<()> {
    require_finite("--lr", a.lr)?;
    if a.lr < 0.0 {
        return Err(Error::Input(format!("--lr must be >= 0, got {}", a.lr)));
    }
    if !(a.percentile > 0.0 && a.percentile <= 1.0) {
        return Err(Error::Input(format!(
            "--percentile must lie in (0, 1], got {}",
            a.percentile
        )));
    }
    let net = load_checkpoint(&a.model)?;
    if a.class >= net.class_count {
        return Err(Error::Input(format!(
            "--class {} out of range for {} classes",
            a.class, net.class_count
        )));
    }
    let data = load_data(&a.data, Split::Train)?;
    let logits = dataset_logits(&net, &data)?;
    let t = class_targets(&logits, data.labels(), a.class)?;
    let (kind, init) = match a.init {
        Init::Avg => (InitKind::AvgImg, init_avg_img(&data, a.class)?),
        Init::Min => (InitKind::MinImg, init_min_img(&net, &data, &t)?),
        Init::AvgMin => (
            InitKind::AvgMinImg,
            init_avg_min_img(&net, &data, &t, a.percentile)?,
        ),
    };
    let cfg = DescentConfig {
        steps: a.steps,
        learning_rate: a.lr,
        clamp_pixels: a.clamp,
    };
    let result = learn_ideal_image(&net, &t, kind, &init, &cfg)?;
    prepare_dir(&a.out_dir)?;
    let stem = format!("class{}_{}", a.class, kind.name());
    let (rows, cols) = image_dims(net.input_dim());
    write_image(
        &init,
        rows,
        cols,
        &a.out_dir.join(format!("init_{stem}.pgm")),
    )?;
    write_image(
        &result.image,
        rows,
        cols,
        &a.out_dir.join(format!("ideal_{stem}.pgm")),
    )?;
    let mut curve = Table::new(["step", "loss"]);
    for (i, &l) in result.loss_curve.iter().enumerate() {
        curve.push(vec![i as f64, l])?;
    }
    write_csv(&curve, &a.out_dir.join(format!("loss_curve_{stem}.csv")))?;
    let mut target = Table::new(["component", "target"]);
    for (j, &v) in t.t.iter().enumerate() {
        target.push(vec![j as f64, v])?;
    }
    write_csv(
        &target,
        &a.out_dir.join(format!("target_class{}.csv", a.class)),
    )?;
    println!("initial_loss {}", format_real(result.loss_curve[0]));
    println!("final_loss {}", format_real(result.final_loss));
    Ok(())
}
