import marimo

__generated_with = "0.18.4"
app = marimo.App(width="medium")


@app.cell
def _():
    from pathlib import Path

    import altair as alt
    import marimo as mo

    from criticality.database import open_plot_data

    return Path, alt, mo, open_plot_data


@app.cell
def _(mo):
    mo.md("""
    # Criticality Detection Figures

    Renders the plot data written by `criticality evaluate --out results/eval`:
    - Aligned aggregate complexity with its cross-run mean
    - Cross-run variance of agent performances
    - SD-derivative trajectories with the calibrated threshold
    - Detection-time histogram with the correctness window
    """)
    return


@app.cell
def _(Path, mo, open_plot_data):
    RESULTS = Path(__file__).parent.parent / "results" / "eval"
    PLOT_DATA = RESULTS / "plot_data"
    mo.stop(
        not PLOT_DATA.is_dir(),
        mo.md(f"No plot data at `{PLOT_DATA}`. Run `criticality evaluate` first."),
    )
    conn = open_plot_data(
        PLOT_DATA, ("complexity", "variance", "derivative", "detection_histogram")
    )
    return RESULTS, conn


@app.cell
def _(RESULTS, mo):
    import json

    report = json.loads((RESULTS / "report.json").read_text())
    rows = "\n".join(
        f"| {c['n_benchmarks']} "
        f"| {100 * c['train_accuracy']['mean']:.1f} ± {100 * c['train_accuracy']['sd']:.1f} "
        f"| {100 * c['test_accuracy']['mean']:.1f} ± {100 * c['test_accuracy']['sd']:.1f} |"
        for c in report["configurations"]
        if c["test_accuracy"] is not None
    )
    mo.md(
        f"""
        ## Detection Accuracy

        | Benchmarks | Train (%) | Test (%) |
        |------------|-----------|----------|
        {rows}
        """
    )
    return


@app.cell
def _(conn, mo):
    counts = [
        row[0]
        for row in conn.execute(
            "SELECT DISTINCT n_benchmarks FROM complexity ORDER BY 1"
        ).fetchall()
    ]
    picker = mo.ui.dropdown(
        options={str(n): n for n in counts}, value=str(counts[-1]), label="Benchmarks"
    )
    picker
    return (picker,)


@app.cell
def _(alt, conn, mo, picker):
    complexity_df = conn.execute(
        "SELECT * FROM complexity WHERE n_benchmarks = ?", [picker.value]
    ).pl()

    runs = (
        alt.Chart(complexity_df.filter(complexity_df["kind"] == "run"))
        .mark_line(opacity=0.15, strokeWidth=1)
        .encode(
            x=alt.X("relative_t:Q", title="Time relative to criticality"),
            y="value:Q",
            detail="run_id:N",
        )
    )
    overlay = (
        alt.Chart(complexity_df.filter(complexity_df["kind"] != "run"))
        .mark_line(strokeWidth=2)
        .encode(x="relative_t:Q", y=alt.Y("value:Q", title="C(t)"), color="kind:N")
    )
    mo.vstack([mo.md("## Aggregate Complexity"), (runs + overlay).properties(width=600)])
    return


@app.cell
def _(alt, conn, mo, picker):
    variance_df = conn.execute(
        "SELECT * FROM variance WHERE n_benchmarks = ? AND kind <> 'agent_variance'",
        [picker.value],
    ).pl()

    variance_chart = (
        alt.Chart(variance_df)
        .mark_line()
        .encode(
            x=alt.X("relative_t:Q", title="Time relative to criticality"),
            y=alt.Y("value:Q", title="Variance across runs"),
            color="kind:N",
        )
        .properties(width=600)
    )
    mo.vstack([mo.md("## Performance Variance"), variance_chart])
    return


@app.cell
def _(alt, conn, mo, picker):
    derivative_df = conn.execute(
        "SELECT * FROM derivative WHERE n_benchmarks = ?", [picker.value]
    ).pl()

    trajectories = (
        alt.Chart(derivative_df.filter(derivative_df["kind"] == "run"))
        .mark_line(opacity=0.15, strokeWidth=1)
        .encode(x="relative_t:Q", y="value:Q", detail="run_id:N")
    )
    lines = (
        alt.Chart(derivative_df.filter(derivative_df["kind"].is_in(["mean", "threshold"])))
        .mark_line(strokeWidth=2)
        .encode(
            x=alt.X("relative_t:Q", title="Time relative to criticality"),
            y=alt.Y("value:Q", title="S'(t)"),
            color="kind:N",
        )
    )
    marker = (
        alt.Chart(derivative_df.filter(derivative_df["kind"] == "critical_marker"))
        .mark_rule(color="red", strokeDash=[4, 4])
        .encode(x="relative_t:Q")
    )
    mo.vstack([mo.md("## SD Derivative"), (trajectories + lines + marker).properties(width=600)])
    return


@app.cell
def _(alt, conn, mo, picker):
    histogram_df = conn.execute(
        "SELECT * FROM detection_histogram WHERE n_benchmarks = ?", [picker.value]
    ).pl()
    window = histogram_df.filter(histogram_df["kind"] == "window")

    shading = (
        alt.Chart(window)
        .mark_rect(opacity=0.15, color="green")
        .encode(x="window_start:Q", x2="window_end:Q")
    )
    bars = (
        alt.Chart(histogram_df.filter(histogram_df["kind"] == "bin"))
        .mark_bar()
        .encode(
            x=alt.X("offset:Q", title="Detected minus actual critical step"),
            y=alt.Y("count:Q", title="Test runs"),
            tooltip=["offset", "count"],
        )
    )
    mo.vstack([mo.md("## Detection Times"), (shading + bars).properties(width=600)])
    return


if __name__ == "__main__":
    app.run()
