//! Parallel vs. sequential throughput on the two hot paths: batched split
//! queries through the gateway, and exhaustive CART split search.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use act_core::baseline::best_split;
use act_core::corpus::Label;
use act_core::exec::ExecMode;
use act_core::gateway::{Gateway, KeywordRule, ScriptedBackend, ScriptedPolicy, SplitScript};

fn scripted_gateway(mode: ExecMode) -> Gateway {
    let policy = ScriptedPolicy {
        split: SplitScript {
            rules: vec![KeywordRule {
                prompt_contains: "fever".to_string(),
                input_all_of: vec!["fever".to_string()],
                then_response: "yes".to_string(),
                else_response: "no".to_string(),
            }],
            ..SplitScript::default()
        },
        ..ScriptedPolicy::default()
    };
    // No cache: every iteration should exercise the backend path.
    Gateway::new(Arc::new(ScriptedBackend::new(policy)))
        .without_cache()
        .with_exec_mode(mode)
}

fn bench_batch_answers(c: &mut Criterion) {
    let inputs: Vec<String> = (0..512)
        .map(|i| {
            if i % 2 == 0 {
                format!("patient {i} reports fever and cough")
            } else {
                format!("patient {i} reports a sprained ankle")
            }
        })
        .collect();
    let question = "Does the note mention fever? (yes/no)";

    let mut group = c.benchmark_group("batch_answer");
    group.sample_size(20);
    for mode in [ExecMode::Parallel, ExecMode::Sequential] {
        let gateway = scripted_gateway(mode);
        group.bench_with_input(BenchmarkId::from_parameter(mode), &gateway, |b, gateway| {
            b.iter(|| gateway.batch_answer(question, &inputs).unwrap());
        });
    }
    group.finish();
}

fn bench_cart_split(c: &mut Criterion) {
    let rows = 400;
    let cols = 64;
    let matrix: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|f| (((r * 31 + f * 17) % 97) as f64) / 97.0)
                .collect()
        })
        .collect();
    let labels: Vec<Label> = (0..rows)
        .map(|r| Label::new(u8::from(r % 3 == 0)).unwrap())
        .collect();
    let all: Vec<usize> = (0..rows).collect();

    let mut group = c.benchmark_group("cart_best_split");
    group.sample_size(30);
    for mode in [ExecMode::Parallel, ExecMode::Sequential] {
        group.bench_with_input(BenchmarkId::from_parameter(mode), &mode, |b, &mode| {
            b.iter(|| best_split(&matrix, &labels, &all, mode).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch_answers, bench_cart_split);
criterion_main!(benches);
