// Offline rating form. Reads the report's JSON island and downloads one
// rating document per stack.
(function () {
  "use strict";
  var info = JSON.parse(document.getElementById("fetqc-data").textContent);
  var schema = info.rating_schema;
  var opened = Date.now();
  var touched = false;
  var form = document.getElementById("rating");
  var score = form.querySelector("#quality");
  var shown = form.querySelector("#quality-value");
  var message = form.querySelector("#message");

  function paint() {
    var q = parseFloat(score.value);
    shown.textContent = touched ? q.toFixed(2) : "not set";
    form.className = touched && q <= schema.quality.exclude_max ? "exclude" : "include";
  }

  var artifacts = form.querySelector("#artifacts");
  schema.artifacts.forEach(function (name) {
    var label = document.createElement("label");
    var select = document.createElement("select");
    select.name = name;
    for (var g = schema.artifact_grade.min; g <= schema.artifact_grade.max; g++) {
      var o = document.createElement("option");
      o.value = String(g);
      o.textContent = String(g);
      select.appendChild(o);
    }
    label.appendChild(document.createTextNode(name.replace(/_/g, " ") + " "));
    label.appendChild(select);
    artifacts.appendChild(label);
  });

  score.addEventListener("input", function () { touched = true; paint(); });

  function collect() {
    var grades = {};
    artifacts.querySelectorAll("select").forEach(function (s) { grades[s.name] = parseInt(s.value, 10); });
    var q = Math.round(parseFloat(score.value) / schema.quality.step) * schema.quality.step;
    q = Math.min(schema.quality.max, Math.max(schema.quality.min, parseFloat(q.toFixed(2))));
    return {
      subject_id: info.subject_id,
      run_id: info.run_id,
      quality: q,
      label: q <= schema.quality.exclude_max ? "exclude" : "include",
      orientation: form.querySelector("#orientation").value,
      artifacts: grades,
      rater_id: form.querySelector("#rater").value,
      seconds_spent: (Date.now() - opened) / 1000,
      timestamp: new Date().toISOString()
    };
  }

  form.querySelector("#export").addEventListener("click", function () {
    if (!touched) {
      message.textContent = "Set a quality score before exporting.";
      return;
    }
    message.textContent = "";
    var blob = new Blob([JSON.stringify(collect(), null, 2)], { type: "application/json" });
    var a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = info.rating_file;
    a.click();
    URL.revokeObjectURL(a.href);
  });

  form.querySelector("#load").addEventListener("change", function (ev) {
    var file = ev.target.files[0];
    if (!file) return;
    file.text().then(function (text) {
      var r = JSON.parse(text);
      score.value = r.quality;
      touched = true;
      form.querySelector("#orientation").value = r.orientation || "unknown";
      form.querySelector("#rater").value = r.rater_id || "";
      artifacts.querySelectorAll("select").forEach(function (s) {
        s.value = String((r.artifacts || {})[s.name] || 0);
      });
      paint();
    });
  });

  paint();
})();
