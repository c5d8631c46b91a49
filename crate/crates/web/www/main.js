import init, { list_prompts, next_words, estimate_prompt, classify_conllu } from "./pkg/synprobe_web.js";

const $ = (id) => document.getElementById(id);

const EXAMPLE = `# sent_id = example
# text = The employees understood the contract would change.
1	The	the	DET	DT	_	2	det	_	_
2	employees	employee	NOUN	NNS	_	3	nsubj	_	_
3	understood	understand	VERB	VBD	_	0	root	_	_
4	the	the	DET	DT	_	5	det	_	_
5	contract	contract	NOUN	NN	_	7	nsubj	_	_
6	would	would	AUX	MD	_	7	aux	_	_
7	change	change	VERB	VB	_	3	ccomp	_	_
8	.	.	PUNCT	.	_	3	punct	_	_
`;

function show(el, f) {
  try {
    el.classList.remove("err");
    f();
  } catch (e) {
    el.classList.add("err");
    el.textContent = String(e);
  }
}

function fillPrompts() {
  const list = JSON.parse(list_prompts($("ambiguity").value));
  $("prompt").innerHTML = "";
  for (const p of list) {
    const o = document.createElement("option");
    o.value = p.id;
    o.textContent = `[${p.prompt_type}] ${p.text}`;
    $("prompt").appendChild(o);
  }
  refreshWords();
}

function refreshWords() {
  const table = $("words");
  show(table, () => {
    const words = JSON.parse(next_words($("prompt").value, +$("p").value, +$("t").value));
    table.innerHTML = "<tr><th>word</th><th>raw</th><th>shaped</th><th></th></tr>";
    for (const w of words) {
      const tr = document.createElement("tr");
      tr.innerHTML =
        `<td>${w.word}</td><td>${w.raw.toFixed(3)}</td><td>${w.transformed.toFixed(3)}</td>` +
        `<td class="bar"><span class="raw" style="width:${w.raw * 100}px"></span><br>` +
        `<span style="width:${w.transformed * 100}px"></span></td>`;
      table.appendChild(tr);
    }
  });
}

function runEstimate() {
  const out = $("estimate");
  show(out, () => {
    const r = JSON.parse(
      estimate_prompt($("prompt").value, +$("p").value, +$("t").value, +$("n").value, BigInt($("seed").value || 0)),
    );
    const lines = [
      `P(${r.target}) = ${r.p_hat.toFixed(3)}  (95% interval ${r.ci[0].toFixed(3)} to ${r.ci[1].toFixed(3)})`,
      `${r.classified} classified, ${r.discards} discarded`,
      "",
      ...r.examples.map((e) => `${e.label.padEnd(5)} ${e.blended ? "(blended) " : ""}${e.text}`),
    ];
    out.innerHTML = "";
    const pre = document.createElement("pre");
    pre.textContent = lines.join("\n");
    out.appendChild(pre);
  });
}

function runClassify() {
  const out = $("classified");
  show(out, () => {
    const post = $("post").value === "" ? undefined : +$("post").value;
    const r = JSON.parse(classify_conllu($("conllu").value, $("c-ambiguity").value, +$("locus").value, post));
    out.textContent = `${r.sentence_id}: ${r.label}${r.blended ? ", blended" : ""}`;
  });
}

await init();
$("conllu").value = EXAMPLE;
$("ambiguity").addEventListener("change", fillPrompts);
$("prompt").addEventListener("change", refreshWords);
$("p").addEventListener("input", refreshWords);
$("t").addEventListener("input", refreshWords);
$("run").addEventListener("click", runEstimate);
$("classify").addEventListener("click", runClassify);
fillPrompts();
